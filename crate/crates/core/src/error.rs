use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("aliasing: omega_max = {omega_max} exceeds the Nyquist frequency {nyquist} rad/s")]
    Aliasing { omega_max: f64, nyquist: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("time integration failed: {0}")]
    Integration(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("component {0} is excluded (zero coefficient norm)")]
    ExcludedComponent(String),

    #[error("no failure region: every component probability is zero")]
    NoFailureRegion,

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
