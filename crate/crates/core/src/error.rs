use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("aliasing risk: {0}")]
    Aliasing(String),

    #[error("under-resolved: {message} (need N >= {required_n})")]
    UnderResolved { message: String, required_n: usize },

    #[error("degenerate iterate: {0}")]
    Degenerate(String),

    #[error("fit refused: {0}")]
    Fit(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("corrupt field file: {0}")]
    CorruptField(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
