//! Shortfall-risk minimization: the least expected loss `E[u(1 − φ)]` of the
//! success function reachable from a fixed endowment.
//!
//! The LP path needs `u` convex and piecewise linear, so that `u(1 − φ)` has
//! an epigraph described by one linear row per segment. Arbitrary
//! non-decreasing losses are handled on small trees by a grid search.

use serde::Deserialize;
use thiserror::Error;

use crate::cone::check_dim;
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpStatus, Relation, Sense, VarId};
use crate::market::{Claim, ScenarioTree};
use crate::quantile::{check_level, is_solvent_endowment, require_solvent_endowment, Budget, PartialHedge, ScaledHedgeLp};
use crate::rat::Rat;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LossError {
    #[error("loss function needs at least two breakpoints")]
    TooFewPoints,
    #[error("breakpoints must run from x = 0 to x = 1")]
    Domain,
    #[error("breakpoint {index}: x not strictly increasing")]
    NotIncreasing { index: usize },
    #[error("u(0) ≠ 0")]
    NotAnchored,
    #[error("breakpoint {index}: u decreasing")]
    Decreasing { index: usize },
    #[error("breakpoint {index}: non-convex (slope drops from {before} to {after})")]
    NonConvex { index: usize, before: Rat, after: Rat },
}

/// Convex, non-decreasing, piecewise-linear `u` on `[0,1]` with `u(0) = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossFunction {
    breakpoints: Vec<(Rat, Rat)>,
}

/// Validates breakpoints `(x, u(x))`.
pub fn check_loss(breakpoints: Vec<(Rat, Rat)>) -> std::result::Result<LossFunction, LossError> {
    if breakpoints.len() < 2 {
        return Err(LossError::TooFewPoints);
    }
    let last = breakpoints.len() - 1;
    if !breakpoints[0].0.is_zero() || breakpoints[last].0 != Rat::one() {
        return Err(LossError::Domain);
    }
    if !breakpoints[0].1.is_zero() {
        return Err(LossError::NotAnchored);
    }
    let mut prev_slope: Option<Rat> = None;
    for (k, w) in breakpoints.windows(2).enumerate() {
        let ((x0, u0), (x1, u1)) = (&w[0], &w[1]);
        if x1 <= x0 {
            return Err(LossError::NotIncreasing { index: k + 1 });
        }
        if u1 < u0 {
            return Err(LossError::Decreasing { index: k + 1 });
        }
        let slope = (u1 - u0) / (x1 - x0);
        if let Some(before) = prev_slope {
            if slope < before {
                return Err(LossError::NonConvex { index: k, before, after: slope });
            }
        }
        prev_slope = Some(slope);
    }
    Ok(LossFunction { breakpoints })
}

impl LossFunction {
    pub fn identity() -> Self {
        LossFunction { breakpoints: vec![(Rat::zero(), Rat::zero()), (Rat::one(), Rat::one())] }
    }

    pub fn breakpoints(&self) -> &[(Rat, Rat)] {
        &self.breakpoints
    }

    /// `(slope, intercept)` per segment.
    pub fn segments(&self) -> Vec<(Rat, Rat)> {
        self.breakpoints
            .windows(2)
            .map(|w| {
                let slope = (&w[1].1 - &w[0].1) / (&w[1].0 - &w[0].0);
                let intercept = &w[0].1 - &slope * &w[0].0;
                (slope, intercept)
            })
            .collect()
    }

    /// `u(x)` for `x ∈ [0,1]`.
    pub fn eval(&self, x: &Rat) -> Rat {
        assert!(!x.is_negative() && *x <= Rat::one(), "loss evaluated outside [0,1]");
        let w = self
            .breakpoints
            .windows(2)
            .find(|w| *x <= w[1].0)
            .expect("last breakpoint is 1");
        let t = (x - &w[0].0) / (&w[1].0 - &w[0].0);
        &w[0].1 + t * (&w[1].1 - &w[0].1)
    }

    /// Largest slope, i.e. the Lipschitz constant.
    pub fn max_slope(&self) -> Rat {
        self.segments().into_iter().map(|(s, _)| s).max().unwrap()
    }
}

/// Parses a JSON array of `["x", "u"]` rational-string pairs.
pub fn load_loss(text: &str) -> Result<LossFunction> {
    let pairs: Vec<(Rat, Rat)> = serde_json::from_str::<Vec<(RatString, RatString)>>(text)
        .map_err(|e| if e.is_syntax() || e.is_eof() { Error::Syntax(e.to_string()) } else { Error::Schema(e.to_string()) })?
        .into_iter()
        .map(|(x, u)| (x.0, u.0))
        .collect();
    check_loss(pairs).map_err(|e| Error::Precondition(format!("invalid loss function: {e}")))
}

struct RatString(Rat);

impl<'de> Deserialize<'de> for RatString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(RatString).map_err(serde::de::Error::custom)
    }
}

/// `E[u(1 − φ)]`.
pub fn expected_loss(tree: &ScenarioTree, u: &LossFunction, phi: &[Rat]) -> Rat {
    tree.leaves().iter().zip(phi).map(|(&l, f)| tree.path_prob(l) * u.eval(&(Rat::one() - f))).sum()
}

/// Minimizes `E[u(1 − φ)]` subject to `v0 ∈ Γ(H·φ)`; the returned value is the risk.
pub fn minimize_shortfall_risk(tree: &ScenarioTree, claim: &Claim, v0: &[Rat], u: &LossFunction) -> Result<PartialHedge> {
    check_dim(tree.dimension(), v0.len())?;
    require_solvent_endowment(tree, v0)?;
    let mut q = ScaledHedgeLp::new(tree, claim, Sense::Minimize, Budget::Fixed(v0))?;
    let segments = u.segments();
    let mut objective: Vec<(VarId, Rat)> = Vec::with_capacity(q.phi.len());
    for (&l, &phi) in tree.leaves().iter().zip(&q.phi) {
        let y = q.slp.lp.add_nonneg();
        // y ≥ m·(1 − φ) + b
        for (m, b) in &segments {
            q.slp.lp.add_constraint(vec![(y, Rat::one()), (phi, m.clone())], Relation::Ge, m + b);
        }
        objective.push((y, tree.path_prob(l).clone()));
    }
    q.slp.lp.set_objective(objective);
    let sol = solve_lp(&q.slp.lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("shortfall LP is {:?}", sol.status)));
    }
    let (phi, strategy) = q.extract(tree, &sol, v0)?;
    let risk = sol.value.unwrap();
    debug_assert_eq!(risk, expected_loss(tree, u, &phi));
    Ok(PartialHedge { phi, strategy, value: risk })
}

/// Whether `v ∈ Γ^u_α(H)`: some admissible strategy from `v` has expected
/// loss of shortfall at most `α`. False when `v ∉ Γ(0)`.
pub fn gamma_alpha_member(tree: &ScenarioTree, claim: &Claim, v: &[Rat], u: &LossFunction, alpha: &Rat) -> Result<bool> {
    check_level("α", alpha, None)?;
    check_dim(tree.dimension(), v.len())?;
    if !is_solvent_endowment(tree, v)? {
        return Ok(false);
    }
    Ok(minimize_shortfall_risk(tree, claim, v, u)?.value <= *alpha)
}

/// Best grid point found by [`brute_force_shortfall`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridOptimum {
    pub phi: Vec<Rat>,
    pub risk: Rat,
}

pub const MAX_GRID_LEAVES: usize = 3;

/// Minimizes `E[u(1 − φ)]` over `φ ∈ {0, 1/n, …, 1}^leaves` with
/// `v0 ∈ Γ(H·φ)`, for any non-decreasing `u`. Trees with at most
/// [`MAX_GRID_LEAVES`] leaves.
///
/// The feasible set is convex and downward closed, so for every grid prefix
/// the last coordinate is taken as large as possible: one LP per prefix.
pub fn brute_force_shortfall<F>(tree: &ScenarioTree, claim: &Claim, v0: &[Rat], u: F, steps: u32) -> Result<GridOptimum>
where
    F: Fn(&Rat) -> Rat,
{
    let n = tree.leaves().len();
    if n > MAX_GRID_LEAVES || steps == 0 {
        return Err(Error::Precondition(format!("grid search needs at most {MAX_GRID_LEAVES} leaves and a positive step count")));
    }
    check_dim(tree.dimension(), v0.len())?;
    require_solvent_endowment(tree, v0)?;
    let step = Rat::new(1, steps as i64);
    let probs: Vec<&Rat> = tree.leaves().iter().map(|&l| tree.path_prob(l)).collect();
    let risk_of = |phi: &[Rat]| -> Rat { phi.iter().zip(&probs).map(|(f, &p)| p * u(&(Rat::one() - f))).sum() };

    let mut best: Option<GridOptimum> = None;
    let mut prefix = Vec::with_capacity(n);
    grid_search(tree, claim, v0, steps, &step, n, &mut prefix, &risk_of, &mut best)?;
    best.ok_or_else(|| Error::Internal("grid search found no feasible point".into()))
}

/// Extends `prefix` one coordinate at a time; returns whether any completion
/// is feasible. Stops a coordinate at its first infeasible value.
#[allow(clippy::too_many_arguments)]
fn grid_search(
    tree: &ScenarioTree,
    claim: &Claim,
    v0: &[Rat],
    steps: u32,
    step: &Rat,
    n: usize,
    prefix: &mut Vec<Rat>,
    risk_of: &dyn Fn(&[Rat]) -> Rat,
    best: &mut Option<GridOptimum>,
) -> Result<bool> {
    if prefix.len() == n - 1 {
        let Some(top) = max_last_coordinate(tree, claim, v0, prefix)? else {
            return Ok(false);
        };
        let mut phi = prefix.clone();
        phi.push((top * Rat::from_int(steps as i64)).floor() * step);
        let risk = risk_of(&phi);
        if best.as_ref().is_none_or(|b| risk < b.risk) {
            *best = Some(GridOptimum { phi, risk });
        }
        return Ok(true);
    }
    let mut any = false;
    for k in 0..=steps {
        prefix.push(step * Rat::from_int(k as i64));
        let feasible = grid_search(tree, claim, v0, steps, step, n, prefix, risk_of, best)?;
        prefix.pop();
        if !feasible {
            break;
        }
        any = true;
    }
    Ok(any)
}

/// `max φ_last` with the other success levels fixed, or `None` if infeasible.
fn max_last_coordinate(tree: &ScenarioTree, claim: &Claim, v0: &[Rat], fixed: &[Rat]) -> Result<Option<Rat>> {
    let mut q = ScaledHedgeLp::new(tree, claim, Sense::Maximize, Budget::Fixed(v0))?;
    for (&p, f) in q.phi.iter().zip(fixed) {
        q.slp.lp.add_constraint(vec![(p, Rat::one())], Relation::Eq, f.clone());
    }
    let last = *q.phi.last().unwrap();
    q.slp.lp.set_objective(vec![(last, Rat::one())]);
    let sol = solve_lp(&q.slp.lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(sol.value.unwrap()),
        _ => None,
    })
}
