use thiserror::Error;

/// Error taxonomy mirrored by the CLI exit codes: configuration problems
/// (bad parameters, unparseable config, infeasible grid) exit with 2,
/// numeric failures (non-finite values, degenerate inputs at solve time)
/// exit with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
