//! Quantile hedging: the largest probability of successful hedging reachable
//! from a fixed endowment, and the least capital reaching a given level.
//!
//! Both problems are one LP over per-leaf success levels `φ ∈ [0,1]` and the
//! transfers of a strategy hedging the modified claim `H·φ`.

use std::io::Write;

use crate::cone::check_dim;
use crate::error::{Error, Result};
use crate::hedge::{check_direction, confirm_domination, hedging_feasible, payoff, Endowment, StrategyLp, Target};
use crate::lp::{solve_lp, LpSolution, LpStatus, Relation, Sense, VarId};
use crate::market::{Claim, ScenarioTree};
use crate::rat::Rat;
use crate::wealth::Strategy;

/// Optimal success levels per leaf (in [`ScenarioTree::leaves`] order), a
/// strategy hedging `H·φ` and the objective value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialHedge {
    pub phi: Vec<Rat>,
    pub strategy: Strategy,
    pub value: Rat,
}

pub(crate) enum Budget<'a> {
    Fixed(&'a [Rat]),
    Ray(&'a [Rat]),
}

/// Strategy LP with a `φ` variable per leaf and `V_T − φ·H ∈ K_T` at every leaf.
pub(crate) struct ScaledHedgeLp<'a> {
    pub slp: StrategyLp<'a>,
    pub phi: Vec<VarId>,
    pub capital: Option<VarId>,
    payoffs: Vec<Vec<Rat>>,
}

impl<'a> ScaledHedgeLp<'a> {
    pub fn new(tree: &'a ScenarioTree, claim: &Claim, sense: Sense, budget: Budget<'_>) -> Result<Self> {
        let mut slp = StrategyLp::new(tree, sense);
        let capital = match budget {
            Budget::Fixed(v) => {
                check_dim(tree.dimension(), v.len())?;
                None
            }
            Budget::Ray(w) => {
                check_direction(tree, w)?;
                Some(slp.lp.add_free())
            }
        };
        let mut phi = Vec::with_capacity(tree.leaves().len());
        let mut payoffs = Vec::with_capacity(tree.leaves().len());
        for &l in tree.leaves() {
            let h = payoff(tree, claim, l)?;
            let p = slp.lp.add_var(Some(Rat::zero()), Some(Rat::one()));
            let endowment = match (&budget, capital) {
                (Budget::Fixed(v), _) => Endowment::Fixed(v),
                (Budget::Ray(w), Some(x)) => Endowment::Ray { scale: x, direction: w },
                (Budget::Ray(_), None) => unreachable!(),
            };
            slp.dominate_at(l, endowment, Target::Scaled { phi: p, payoff: h });
            phi.push(p);
            payoffs.push(h.to_vec());
        }
        Ok(ScaledHedgeLp { slp, phi, capital, payoffs })
    }

    /// `Σ P(ω)·φ_ω` as objective terms.
    pub fn expected_phi(&self, tree: &ScenarioTree) -> Vec<(VarId, Rat)> {
        tree.leaves().iter().zip(&self.phi).map(|(&l, &p)| (p, tree.path_prob(l).clone())).collect()
    }

    /// Reads `φ` and the strategy, and re-checks the witness from `v`.
    pub fn extract(&self, tree: &ScenarioTree, sol: &LpSolution, v: &[Rat]) -> Result<(Vec<Rat>, Strategy)> {
        let phi: Vec<Rat> = self.phi.iter().map(|&p| sol.get(p).unwrap().clone()).collect();
        let strategy = self.slp.strategy(sol);
        let targets: Vec<Vec<Rat>> =
            self.payoffs.iter().zip(&phi).map(|(h, f)| h.iter().map(|x| x * f).collect()).collect();
        confirm_domination(tree, v, &strategy, &targets)?;
        Ok((phi, strategy))
    }
}

/// `v ∈ Γ(0)`: some strategy from `v` ends solvent everywhere.
pub(crate) fn is_solvent_endowment(tree: &ScenarioTree, v: &[Rat]) -> Result<bool> {
    Ok(hedging_feasible(tree, &Claim::zero(tree), v)?.0)
}

pub(crate) fn require_solvent_endowment(tree: &ScenarioTree, v: &[Rat]) -> Result<()> {
    if !is_solvent_endowment(tree, v)? {
        return Err(Error::Precondition("initial endowment is not in Γ(0)".into()));
    }
    Ok(())
}

pub(crate) fn check_level(name: &str, x: &Rat, upper: Option<&Rat>) -> Result<()> {
    if x.is_negative() || upper.is_some_and(|u| x > u) {
        return Err(Error::Precondition(format!("{name} = {x} out of range")));
    }
    Ok(())
}

/// Maximizes `E[φ]` subject to `v0 ∈ Γ(H·φ)`.
pub fn maximize_effectiveness(tree: &ScenarioTree, claim: &Claim, v0: &[Rat]) -> Result<PartialHedge> {
    check_dim(tree.dimension(), v0.len())?;
    require_solvent_endowment(tree, v0)?;
    let mut q = ScaledHedgeLp::new(tree, claim, Sense::Maximize, Budget::Fixed(v0))?;
    q.slp.lp.set_objective(q.expected_phi(tree));
    let sol = solve_lp(&q.slp.lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!("effectiveness LP is {:?}", sol.status)));
    }
    let (phi, strategy) = q.extract(tree, &sol, v0)?;
    Ok(PartialHedge { phi, strategy, value: sol.value.unwrap() })
}

/// Whether `v ∈ Γ_ε(H)`, i.e. some admissible strategy from `v` succeeds
/// with expectation at least `1 − ε`. False when `v ∉ Γ(0)`.
pub fn gamma_eps_member(tree: &ScenarioTree, claim: &Claim, v: &[Rat], eps: &Rat) -> Result<bool> {
    check_level("ε", eps, Some(&Rat::one()))?;
    check_dim(tree.dimension(), v.len())?;
    if !is_solvent_endowment(tree, v)? {
        return Ok(false);
    }
    let best = maximize_effectiveness(tree, claim, v)?;
    Ok(best.value >= Rat::one() - eps)
}

/// Least `x` with `x·w ∈ Γ_ε(H)`, with its success levels and strategy.
pub fn min_capital_eps_with_hedge(tree: &ScenarioTree, claim: &Claim, w: &[Rat], eps: &Rat) -> Result<(Rat, PartialHedge)> {
    check_level("ε", eps, Some(&Rat::one()))?;
    let mut q = ScaledHedgeLp::new(tree, claim, Sense::Minimize, Budget::Ray(w))?;
    let x = q.capital.unwrap();
    q.slp.lp.add_constraint(q.expected_phi(tree), Relation::Ge, Rat::one() - eps);
    q.slp.lp.set_objective(vec![(x, Rat::one())]);
    let sol = solve_lp(&q.slp.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Internal("no capital along the direction reaches the level".into())),
        LpStatus::Unbounded => {
            return Err(Error::Model("capital unbounded below: the market admits arbitrage".into()))
        }
    }
    let capital = sol.get(x).unwrap().clone();
    let v: Vec<Rat> = w.iter().map(|wi| wi * &capital).collect();
    let (phi, strategy) = q.extract(tree, &sol, &v)?;
    let value = tree.leaves().iter().zip(&phi).map(|(&l, f)| tree.path_prob(l) * f).sum();
    Ok((capital, PartialHedge { phi, strategy, value }))
}

pub fn min_capital_eps(tree: &ScenarioTree, claim: &Claim, w: &[Rat], eps: &Rat) -> Result<Rat> {
    min_capital_eps_with_hedge(tree, claim, w, eps).map(|(x, _)| x)
}

/// Writes `leaf_id,probability,phi` rows.
pub fn write_phi_csv<W: Write>(tree: &ScenarioTree, phi: &[Rat], out: W) -> Result<()> {
    check_dim(tree.leaves().len(), phi.len())?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["leaf_id", "probability", "phi"]).map_err(io)?;
    for (&l, f) in tree.leaves().iter().zip(phi) {
        w.write_record([tree.node(l).id.clone(), tree.path_prob(l).to_string(), f.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
