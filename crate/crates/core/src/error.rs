use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{context}: linear program failed: {source}")]
    LpContext {
        context: String,
        #[source]
        source: LpError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("polytope is empty")]
    Empty,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("gauge undefined: origin is not strictly interior (offset {offset} in row {row})")]
    NotGaugeCarrier { row: usize, offset: f64 },
    #[error("consistency set is empty: the data admit no plant within the noise bound")]
    ModelInvalidated,
    #[error("consistency set is unbounded: data matrix is rank deficient")]
    RankDeficient,
    #[error("no invariant set found: {0}")]
    NoInvariantSet(String),
    #[error("state outside robustly controllable region: {0}")]
    ControllerInfeasible(String),
    #[error("initial state {0} is outside the invariant set")]
    InitialStateOutside(String),
    #[error("training data generation failed: {0}")]
    TrainingData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn lp(context: impl Into<String>, source: LpError) -> Self {
        Error::LpContext {
            context: context.into(),
            source,
        }
    }
}
