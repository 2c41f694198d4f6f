//! Quantile hedging and shortfall-risk minimization for multi-asset claims on
//! finite scenario trees with proportional transaction costs.
//!
//! Everything is computed in exact rational arithmetic ([`Rat`]) by a
//! two-phase simplex solver ([`lp`]). The main entry points are
//! [`quantile::maximize_effectiveness`], [`quantile::min_capital_eps`],
//! [`shortfall::minimize_shortfall_risk`] and [`hedge::hedging_feasible`].

pub mod cone;
pub mod consistency;
pub mod error;
pub mod frictionless;
pub mod hedge;
pub mod lp;
pub mod market;
pub mod quantile;
pub mod rat;
pub mod shortfall;
pub mod success;
pub mod wealth;

#[cfg(test)]
pub(crate) mod testing;

pub use error::{Error, Result};
pub use lp::{solve_lp, solve_stats, LpError, LpProblem, LpSolution, LpStatus, Relation, Sense, VarId};
pub use market::{Claim, CostMatrix, ScenarioTree};
pub use rat::Rat;
