use thiserror::Error;

/// Errors raised when constructing or combining lattice objects.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid lattice window [{n_min}, {n_max}]: need at least 3 sites")]
    Window { n_min: i64, n_max: i64 },
    #[error("lattice spacing must be positive and finite, got {0}")]
    Spacing(f64),
    #[error("field length {got} does not match window length {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at site {0}")]
    NonFinite(i64),
    #[error("parameter `{name}` out of range: {value} ({reason})")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("spatial gauge violated: a1 has nonzero entry {value} at bond {bond}")]
    GaugeNotFixed { bond: usize, value: f64 },
}

/// Errors from the time integrator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(&'static str),
    #[error("step size underflow at t = {t}: dt = {dt:e}")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("non-finite state encountered at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Errors from field/metadata file I/O.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv {path}: {reason}")]
    Csv { path: String, reason: String },
    #[error("malformed json {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub type Result<T, E = LatticeError> = std::result::Result<T, E>;
