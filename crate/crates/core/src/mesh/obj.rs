//! ASCII Wavefront OBJ (v/f records) and per-vertex scalar CSV sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

use super::TriMesh;

pub fn write_obj<T: Real>(mesh: &TriMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::with_capacity(mesh.vertex_count() * 40 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads `v` and `f` records; other records are ignored. Polygons are
/// fan-triangulated; `a/b/c` index forms keep the position index only.
pub fn read_obj<T: Real>(path: impl AsRef<Path>) -> Result<TriMesh<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut verts = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [T::zero(); 3];
                for slot in c.iter_mut() {
                    let tok = it
                        .next()
                        .ok_or_else(|| Error::parse(path, ln + 1, "vertex needs 3 coordinates"))?;
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::parse(path, ln + 1, format!("bad coordinate {tok:?}")))?;
                    *slot = T::of(v);
                }
                verts.push(Vec3::from_array(c));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        match first.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(Error::parse(path, ln + 1, format!("bad face index {tok:?}"))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(path, ln + 1, "face needs at least 3 indices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(verts, faces)
}

/// CSV `vertex_index,value`.
pub fn write_vertex_scalars<V: std::fmt::Display>(values: &[V], path: impl AsRef<Path>) -> Result<()> {
    let rows = values.iter().enumerate().map(|(i, v)| [i.to_string(), v.to_string()]);
    crate::table::write(path.as_ref(), &["vertex_index", "value"], rows)
}

pub fn read_vertex_scalars<V: std::str::FromStr>(path: impl AsRef<Path>) -> Result<Vec<V>> {
    let path = path.as_ref();
    crate::table::read_indexed(path, &["vertex_index", "value"])?
        .iter()
        .map(|row| row.get(path, 1, "value"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn obj_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.obj");
        let m = shapes::icosphere::<f64>(1, 3.3);
        write_obj(&m, &p).unwrap();
        let r: TriMesh<f64> = read_obj(&p).unwrap();
        assert_eq!(r.vertices(), m.vertices());
        assert_eq!(r.faces(), m.faces());
    }

    #[test]
    fn obj_reports_line_of_bad_record() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n").unwrap();
        let err = read_obj::<f64>(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn scalars_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.csv");
        write_vertex_scalars(&[0.5, 1.25, 3.0], &p).unwrap();
        let r: Vec<f64> = read_vertex_scalars(&p).unwrap();
        assert_eq!(r, vec![0.5, 1.25, 3.0]);
    }
}
