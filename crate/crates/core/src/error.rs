use thiserror::Error;

use crate::program::SolveStatus;

pub type Result<T> = std::result::Result<T, RermError>;

#[derive(Debug, Error)]
pub enum RermError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid cone: {0}")]
    InvalidCone(String),

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("label at row {index} is {value}, expected -1 or +1")]
    InvalidLabel { index: usize, value: f64 },

    /// The support function is +inf in the requested direction. `direction`
    /// is a recession direction `x` of the set with `theta^T x > 0`.
    #[error("set is unbounded in the requested direction")]
    Unbounded { direction: Vec<f64> },

    #[error("uncertainty set{} is empty", fmt_index(.index))]
    EmptySet { index: Option<usize> },

    #[error("uncertainty set{} is unbounded", fmt_index(.index))]
    UnboundedSet { index: Option<usize> },

    #[error("solver finished with status {status:?}: {message}")]
    Solver { status: SolveStatus, message: String },

    #[error("grid has {points} points, cap is {cap}")]
    GridCapExceeded { points: u128, cap: u128 },

    #[error("polytope enumeration failed: {0}")]
    Polytope(String),

    #[error("csv line {line}, column {column}: {message}")]
    Csv {
        line: usize,
        column: String,
        message: String,
    },

    #[error("{pointer}: {message}")]
    Schema { pointer: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" of datapoint {i}"),
        None => String::new(),
    }
}

impl RermError {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        RermError::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    /// Attach a datapoint index to set-level errors.
    pub fn at_datapoint(self, i: usize) -> Self {
        match self {
            RermError::EmptySet { .. } => RermError::EmptySet { index: Some(i) },
            RermError::UnboundedSet { .. } | RermError::Unbounded { .. } => {
                RermError::UnboundedSet { index: Some(i) }
            }
            other => other,
        }
    }
}
