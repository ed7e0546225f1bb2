use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("cell index {index:?} out of range for grid with {cells:?} cells")]
    IndexOutOfRange {
        index: Vec<usize>,
        cells: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("kernel table for {cells} offsets is too large to allocate")]
    Resource { cells: usize },

    #[error("time step {dt} violates the CFL condition (largest admissible step is {max_dt})")]
    CflViolation { dt: f64, max_dt: f64 },

    #[error("numerical integrity lost at step {step}: {detail}")]
    NumericalIntegrity { step: u64, detail: String },

    #[error("initial measure deposits no mass inside the computational domain")]
    EmptyField,

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("lipschitz bound {bound} is exceeded by |grad| = {sample} at radius {radius}")]
    InternalConsistency {
        bound: f64,
        sample: f64,
        radius: f64,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invariant check failed: {0}")]
    InvariantFailure(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
