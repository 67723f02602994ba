use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("xml parse error at line {line}: {message}")]
    Xml { line: u32, message: String },

    #[error("invalid annotation for vehicle {entry}: {message}")]
    Annotation { entry: String, message: String },

    #[error("invalid symbol {0:?}: not in the A-Z/0-9 alphabet")]
    InvalidSymbol(char),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("degenerate region: {0}")]
    Region(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate vehicle {vehicle} in camera {camera} list")]
    DuplicateVehicle { vehicle: String, camera: u8 },

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
    },

    #[error("missing data: {0}")]
    Missing(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
