use thiserror::Error;

use crate::lp::LpError;
use crate::market::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("invalid market: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("claim not strictly positive{}", .leaf.as_ref().map(|l| format!(" at unhedged leaf {l}")).unwrap_or_default())]
    ClaimNotStrictlyPositive { leaf: Option<String> },
    #[error("no proportional transfer exists")]
    NoProportionalTransfer,
    #[error("position not liquidatable")]
    NotLiquidatable,
    #[error("strategy is not admissible: terminal wealth at leaf {leaf} is not solvent")]
    Inadmissible { leaf: String },
    #[error("efficient friction violated at node {node}")]
    EfViolated { node: String },
    #[error("EMM violated: no martingale measure exists")]
    EmmViolated,
    #[error("model error: {0}")]
    Model(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
