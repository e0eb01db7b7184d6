use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("cannot normalize a vector with zero norm")]
    ZeroNorm,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("size error: {0}")]
    Size(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("capacity error: requested {requested} items from {available}")]
    Capacity { requested: usize, available: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(&'static str),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for the command-line tool: 3 for numeric failures
    /// (including zero norms and degenerate series), 2 for every other data
    /// error. Usage errors (1) never reach this type.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::ZeroNorm | Error::DegenerateSeries(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
