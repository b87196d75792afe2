use std::path::PathBuf;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A block does not have the shape implied by the model dimensions.
    #[error("block {block} has shape {found:?}, expected {expected:?}")]
    Dimension {
        block: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    /// A precondition of an operation was not met by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The joint covariance of the message and the side information is singular.
    #[error("degenerate message covariance: {0}")]
    DegenerateMessage(String),

    #[error("not an equilibrium: oracle cost {oracle_cost} beats solver cost {solver_cost}")]
    NonEquilibrium { oracle_cost: f64, solver_cost: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
