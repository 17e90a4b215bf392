use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("case parse error at line {line}, column {column}: {message}")]
    CaseParse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {0}")]
    Validation(String),
    #[error("unknown device: {0}")]
    UnknownDevice(String),
    #[error("invalid setting for {device}: {reason}")]
    InvalidSetting { device: String, reason: String },
    #[error("sensitivity extraction failed: perturbing {controller} does not converge")]
    PerturbationDiverged { controller: String },
    #[error("base case power flow does not converge")]
    BaseCaseDiverged,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("no controllable states")]
    NoControllableStates,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("perplexity calibration failed for point {point}")]
    Perplexity { point: usize },
    #[error("unknown scenario: {0}")]
    UnknownScenario(String),
    #[error("non-finite parameters in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("respond requires abnormal state")]
    NormalState,
    #[error("unknown recommendation: {0}")]
    UnknownRecommendation(u64),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
