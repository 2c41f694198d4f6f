//! Super-hedging: does some strategy from endowment `v` reach terminal wealth
//! dominating the claim at every leaf, and what is the least capital along a
//! direction that does.

use crate::cone::{self, check_dim, solvency_cone, transfer_pairs};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpSolution, LpStatus, Sense, VarId};
use crate::market::{Claim, ScenarioTree};
use crate::rat::Rat;
use crate::wealth::{run_strategy, Strategy, TransferMatrix, WealthPath};

/// Initial endowment of a strategy LP.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Endowment<'a> {
    Fixed(&'a [Rat]),
    /// `x·w` with `x` an LP variable.
    Ray { scale: VarId, direction: &'a [Rat] },
}

/// What terminal wealth at a leaf has to dominate.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Target<'a> {
    Payoff(&'a [Rat]),
    /// `φ·H` with `φ` an LP variable.
    Scaled { phi: VarId, payoff: &'a [Rat] },
}

/// Strategy LP over one transfer variable per node and ordered asset pair.
/// Leaf wealth is affine in these variables, so domination constraints at the
/// leaves are linear.
pub(crate) struct StrategyLp<'a> {
    pub lp: LpProblem,
    tree: &'a ScenarioTree,
    pairs: Vec<(usize, usize)>,
    transfers: Vec<Vec<VarId>>,
}

impl<'a> StrategyLp<'a> {
    pub fn new(tree: &'a ScenarioTree, sense: Sense) -> Self {
        let mut lp = LpProblem::new(sense);
        let pairs: Vec<(usize, usize)> = transfer_pairs(tree.dimension()).collect();
        let transfers = (0..tree.len()).map(|_| pairs.iter().map(|_| lp.add_nonneg()).collect()).collect();
        StrategyLp { lp, tree, pairs, transfers }
    }

    /// Linear terms of `V_leaf^i` contributed by transfers along the path.
    fn wealth_terms(&self, leaf: usize, i: usize) -> Vec<(VarId, Rat)> {
        let s_leaf = &self.tree.node(leaf).prices[i];
        let mut terms = Vec::new();
        for n in self.tree.path(leaf) {
            let node = self.tree.node(n);
            let growth = s_leaf / &node.prices[i];
            for (&(a, b), &var) in self.pairs.iter().zip(&self.transfers[n]) {
                if b == i {
                    terms.push((var, growth.clone()));
                } else if a == i {
                    terms.push((var, -(Rat::one() + node.costs.get(a, b)) * &growth));
                }
            }
        }
        terms
    }

    /// Requires `V_leaf − target ∈ K_leaf`.
    pub fn dominate_at(&mut self, leaf: usize, endowment: Endowment<'_>, target: Target<'_>) {
        let d = self.tree.dimension();
        let root = self.tree.root_prices();
        let node = self.tree.node(leaf);
        let mut lhs = Vec::with_capacity(d);
        let mut rhs = Vec::with_capacity(d);
        for i in 0..d {
            let growth = &node.prices[i] / &root[i];
            let mut row = self.wealth_terms(leaf, i);
            let mut b = Rat::zero();
            match endowment {
                Endowment::Fixed(v) => b -= &v[i] * &growth,
                Endowment::Ray { scale, direction } => {
                    if !direction[i].is_zero() {
                        row.push((scale, &direction[i] * &growth));
                    }
                }
            }
            match target {
                Target::Payoff(h) => b += &h[i],
                Target::Scaled { phi, payoff } => {
                    if !payoff[i].is_zero() {
                        row.push((phi, -&payoff[i]));
                    }
                }
            }
            lhs.push(row);
            rhs.push(b);
        }
        solvency_cone(&node.costs).add_membership_rows(&mut self.lp, lhs, rhs);
    }

    pub fn strategy(&self, sol: &LpSolution) -> Strategy {
        let d = self.tree.dimension();
        let actions = self
            .transfers
            .iter()
            .map(|vars| {
                let mut m = TransferMatrix::zero(d);
                for (&(i, j), &var) in self.pairs.iter().zip(vars) {
                    let x = sol.get(var).expect("optimal assignment");
                    if !x.is_zero() {
                        m.set(i, j, x.clone());
                    }
                }
                m
            })
            .collect();
        Strategy { actions }
    }
}

pub(crate) fn payoff<'c>(tree: &ScenarioTree, claim: &'c Claim, leaf: usize) -> Result<&'c [Rat]> {
    let h = claim
        .payoff(leaf)
        .ok_or_else(|| Error::Precondition(format!("claim undefined on leaf {}", tree.node(leaf).id)))?;
    check_dim(tree.dimension(), h.len())?;
    Ok(h)
}

/// Re-checks leafwise domination of `targets` by the strategy's terminal
/// wealth, independently of the LP that produced it.
pub(crate) fn confirm_domination(
    tree: &ScenarioTree,
    v: &[Rat],
    strategy: &Strategy,
    targets: &[Vec<Rat>],
) -> Result<WealthPath> {
    let path = run_strategy(tree, v, strategy)?;
    for (&l, h) in tree.leaves().iter().zip(targets) {
        if !cone::dominates(path.at(l), h, &tree.node(l).costs)? {
            return Err(Error::Internal(format!("witness strategy fails to dominate at leaf {}", tree.node(l).id)));
        }
    }
    Ok(path)
}

pub(crate) fn check_direction(tree: &ScenarioTree, w: &[Rat]) -> Result<()> {
    check_dim(tree.dimension(), w.len())?;
    if w.iter().any(Rat::is_negative) || w.iter().all(Rat::is_zero) {
        return Err(Error::Precondition("direction must be non-negative and non-zero".into()));
    }
    Ok(())
}

/// Whether `v ∈ Γ(H)`, with a witness strategy when it is.
pub fn hedging_feasible(tree: &ScenarioTree, claim: &Claim, v: &[Rat]) -> Result<(bool, Option<Strategy>)> {
    check_dim(tree.dimension(), v.len())?;
    let mut slp = StrategyLp::new(tree, Sense::Minimize);
    let mut targets = Vec::with_capacity(tree.leaves().len());
    for &l in tree.leaves() {
        let h = payoff(tree, claim, l)?;
        slp.dominate_at(l, Endowment::Fixed(v), Target::Payoff(h));
        targets.push(h.to_vec());
    }
    let sol = solve_lp(&slp.lp)?;
    if sol.status != LpStatus::Optimal {
        return Ok((false, None));
    }
    let strategy = slp.strategy(&sol);
    confirm_domination(tree, v, &strategy, &targets)?;
    Ok((true, Some(strategy)))
}

/// Least `x` with `x·w ∈ Γ(H)`, and a strategy hedging from `x·w`.
///
/// `x` is not sign-restricted; the raw LP optimum is reported.
pub fn min_hedging_capital_with_strategy(tree: &ScenarioTree, claim: &Claim, w: &[Rat]) -> Result<(Rat, Strategy)> {
    check_direction(tree, w)?;
    let mut slp = StrategyLp::new(tree, Sense::Minimize);
    let x = slp.lp.add_free();
    let mut targets = Vec::with_capacity(tree.leaves().len());
    for &l in tree.leaves() {
        let h = payoff(tree, claim, l)?;
        slp.dominate_at(l, Endowment::Ray { scale: x, direction: w }, Target::Payoff(h));
        targets.push(h.to_vec());
    }
    slp.lp.set_objective(vec![(x, Rat::one())]);
    let sol = solve_lp(&slp.lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Internal("no capital along the direction hedges the claim".into())),
        LpStatus::Unbounded => {
            return Err(Error::Model("hedging capital unbounded below: the market admits arbitrage".into()))
        }
    }
    let capital = sol.get(x).unwrap().clone();
    let strategy = slp.strategy(&sol);
    let v: Vec<Rat> = w.iter().map(|wi| wi * &capital).collect();
    confirm_domination(tree, &v, &strategy, &targets)?;
    Ok((capital, strategy))
}

pub fn min_hedging_capital(tree: &ScenarioTree, claim: &Claim, w: &[Rat]) -> Result<Rat> {
    min_hedging_capital_with_strategy(tree, claim, w).map(|(x, _)| x)
}
