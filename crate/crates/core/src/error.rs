use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fundamental-domain reduction did not terminate within {cap} generator applications")]
    ReductionOverflow { cap: usize },
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("integrability: {0}")]
    Integrability(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("field {0} was not registered for accumulation")]
    UnregisteredField(usize),
    #[error("time {t} is outside the recorded horizon {horizon}")]
    Horizon { t: f64, horizon: f64 },
    #[error("path {path_id} failed: {source}")]
    Path {
        path_id: u64,
        #[source]
        source: Box<Error>,
    },
}
