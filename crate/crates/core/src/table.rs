//! Small helpers over the `csv` crate: header checking and field parsing
//! with errors that name the file, line and column.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A data row with its 1-based line number in the file.
pub(crate) struct Row {
    pub line: usize,
    pub fields: csv::StringRecord,
}

impl Row {
    pub fn get<V: FromStr>(&self, path: &Path, idx: usize, name: &str) -> Result<V> {
        let raw = self
            .fields
            .get(idx)
            .ok_or_else(|| Error::parse(path, self.line, format!("missing column {name}")))?;
        raw.trim()
            .parse()
            .map_err(|_| Error::parse(path, self.line, format!("bad {name} value {raw:?}")))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Reads every record, requiring the header to equal `header` exactly.
pub(crate) fn read(path: &Path, header: &[&str]) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let fields = rec.map_err(|e| csv_err(path, e))?;
        let line = fields.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push(Row { line, fields });
    }
    Ok(rows)
}

/// Reads rows whose first column must count 0, 1, 2, ... (`vertex_index`).
pub(crate) fn read_indexed(path: &Path, header: &[&str]) -> Result<Vec<Row>> {
    let rows = read(path, header)?;
    for (k, row) in rows.iter().enumerate() {
        let i: usize = row.get(path, 0, header[0])?;
        if i != k {
            return Err(Error::parse(path, row.line, format!("expected {} {k}, found {i}", header[0])));
        }
    }
    Ok(rows)
}

/// Writes `header` followed by `rows`.
pub(crate) fn write<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
