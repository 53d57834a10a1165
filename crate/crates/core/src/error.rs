use std::path::PathBuf;

/// Errors raised by instance construction, solvers and the experiment driver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("design matrix is singular (min eigenvalue {min_eig:e})")]
    SingularDesign { min_eig: f64 },

    #[error("support point norm {norm} exceeds feature bound {bound}")]
    FeatureBound { norm: f64, bound: f64 },

    #[error("step size {alpha} outside (0, {max}]")]
    StepSize { alpha: f64, max: f64 },

    #[error("noise covariance is degenerate (min eigenvalue {min_eig:e})")]
    DegenerateNoise { min_eig: f64 },

    #[error("{what} is not symmetric positive definite (min eigenvalue {min_eig:e})")]
    NotSpd { what: &'static str, min_eig: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("noise model has no finite essential supremum")]
    UnboundedNoise,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
