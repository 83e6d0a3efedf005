use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every fallible operation in the crate reports one of these.
///
/// The variants split into user-side problems (bad configuration, bad input
/// data, out-of-domain arguments) and numerical problems that arise while
/// estimating; [`Error::is_numeric`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("inference error: {0}")]
    Inference(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("study error: {0}")]
    Study(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Estimation(_)
                | Error::Inference(_)
                | Error::Numeric(_)
                | Error::Evaluation(_)
                | Error::Study(_)
        )
    }
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
