use thiserror::Error;

use crate::coalition::Coalition;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {}", format_validation(*.player, .field, .message))]
    Validation {
        player: Option<u32>,
        field: String,
        message: String,
    },

    #[error("coalition must be nonempty")]
    EmptyCoalition,

    #[error("coalition {coalition} is not a subset of the {n} players")]
    UnknownPlayers { coalition: Coalition, n: usize },

    #[error("infeasible action at state {state}: {reason}")]
    InfeasibleAction { state: usize, reason: String },

    #[error(
        "value iteration for coalition {coalition} did not converge after {iterations} iterations \
         (certified gap {gap:.3e} per epoch, bracket width {width:.3e})"
    )]
    NonConvergence {
        coalition: Coalition,
        iterations: usize,
        gap: f64,
        width: f64,
    },

    #[error("size cap exceeded: {what} is {actual}, limit {limit}")]
    SizeCap {
        what: &'static str,
        actual: u128,
        limit: u128,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("reducible chain: {0}")]
    ReducibleChain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear program failed: {0}")]
    Lp(String),
}

fn format_validation(player: Option<u32>, field: &str, message: &str) -> String {
    match player {
        Some(id) => format!("player {id}: {field}: {message}"),
        None => format!("{field}: {message}"),
    }
}

impl Error {
    pub(crate) fn validation(player: Option<u32>, field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            player,
            field: field.to_string(),
            message: message.into(),
        }
    }
}
