use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("value error: {0}")]
    Value(String),

    /// A weight vector whose norm is too small to normalize.
    #[error("degenerate direction: unit {unit} has |v| = {norm:e}")]
    DegenerateDirection { unit: usize, norm: f64 },

    #[error("invalid scale: g = {0} (log-scale mode requires g > 0)")]
    InvalidScale(f64),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("batch size {got} is too small (need at least {need})")]
    BatchSize { got: usize, need: usize },

    #[error("sample size {got} is too small (need at least {need})")]
    SampleSize { got: usize, need: usize },

    #[error("alignment undefined: {0}")]
    UndefinedAlignment(String),

    #[error("model build error: {0}")]
    Build(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("numerical divergence at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the `wnorm` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 1,
            Error::Format(_) | Error::Consistency(_) | Error::Length(_) | Error::Io(_) => 2,
            Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
