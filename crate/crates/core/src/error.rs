use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown pilot policy `{0}` (expected `round_robin` or `random`)")]
    UnknownPolicy(String),
    #[error("degenerate channel statistics for ue {ue} at ap {ap}: varsigma + gamma = 0")]
    DegenerateChannel { ue: usize, ap: usize },
    #[error("cross-ap kernel needs two distinct aps, got ap {0} twice")]
    SameAp(usize),
    #[error("degenerate gamma fit: mean {mean:e}, variance {var:e}")]
    DegenerateFit { mean: f64, var: f64 },
    #[error("harvested-energy variance expression is negative ({0:e})")]
    NegativeVariance(f64),
    #[error("empty sample set")]
    EmptySamples,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("interval {interval}: {source}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
