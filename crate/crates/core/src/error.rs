use thiserror::Error;

/// Errors raised by the library. Certification failures are never errors;
/// they show up as verdicts inside reports and traces.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("outside the Borel disc: |u|/lambda = {ratio} (limit {limit})")]
    OutsideDisc { ratio: f64, limit: f64 },
    #[error("division error: {0}")]
    Division(String),
    #[error("order violation: {0}")]
    Order(String),
    #[error("step {index}: {detail}")]
    Step { index: usize, detail: String },
    #[error("scheduling failure: {0}")]
    Scheduling(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
