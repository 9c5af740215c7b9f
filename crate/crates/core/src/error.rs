use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },
    #[error("vertex {vertex} has no non-degenerate incident face")]
    IsolatedVertex { vertex: usize },
    #[error("vertex {vertex} has zero mixed area")]
    ZeroArea { vertex: usize },
    #[error("edge ({a}, {b}) is shared by {count} faces; expected at most 2")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("mesh is not watertight: edge ({a}, {b}) has {count} incident face(s)")]
    NotWatertight { a: usize, b: usize, count: usize },
    #[error("edge ({a}, {b}) has zero length")]
    ZeroLengthEdge { a: usize, b: usize },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("unsupported data type: {0}")]
    UnsupportedDataType(String),
    #[error("bad magic number in {path}: {found:?}")]
    BadMagic { path: PathBuf, found: String },
    #[error("truncated payload in {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("unsupported orientation: {0}")]
    UnsupportedOrientation(String),
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("region {0} has no vertices")]
    EmptyRegion(String),
    #[error("warp folds space: Jacobian determinant {det} at {at}")]
    FoldingWarp { det: f64, at: String },
    #[error("optimization diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
