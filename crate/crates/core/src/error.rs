use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario field `{field}`: {reason}")]
    InvalidScenario { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reception window: {0}")]
    InvalidWindow(String),

    #[error("time slot {requested} precedes reference slot {reference}")]
    SlotBeforeReference { requested: u64, reference: u64 },

    #[error("unknown planner `{0}` (expected epso, pso or ga)")]
    UnknownPlanner(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn scenario(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidScenario {
            field,
            reason: reason.into(),
        }
    }
}
