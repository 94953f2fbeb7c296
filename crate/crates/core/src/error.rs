use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode {mode} out of range for a {ndim}-mode tensor")]
    ModeOutOfRange { mode: usize, ndim: usize },

    #[error("degenerate dictionary: every atom is zero")]
    DegenerateDictionary,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("markov chain is reducible")]
    ReducibleChain,

    #[error("power iteration did not converge after {0} iterations")]
    NotConverged(usize),

    #[error("stream yielded no minibatches")]
    EmptyStream,

    #[error("minibatch history is not stored (diagnostic mode is off)")]
    HistoryUnavailable,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
