//! The zero-cost case. Without transaction costs every multi-asset object
//! collapses to the sum of its components, and quantile hedging becomes the
//! classical scalar problem priced by equivalent martingale measures.
//!
//! Martingale measures here make every price process a martingale as quoted,
//! so the scalar picture matches the multi-asset one when prices are quoted
//! in a tradable numeraire (some asset with constant price).

use std::collections::BTreeSet;
use std::fmt;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::cone::{check_dim, dominates};
use crate::error::{Error, Result};
use crate::hedge::payoff;
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense, VarId};
use crate::market::{Claim, ScenarioTree};
use crate::quantile::{maximize_effectiveness, min_capital_eps, PartialHedge};
use crate::rat::Rat;
use crate::success::max_transfer_ratio;
use crate::wealth::{is_admissible, run_strategy, sample_long_only_strategy, Strategy, WealthPath};

pub fn is_frictionless(tree: &ScenarioTree) -> bool {
    tree.nodes().iter().all(|n| n.costs.is_zero())
}

fn require_frictionless(tree: &ScenarioTree) -> Result<()> {
    if !is_frictionless(tree) {
        return Err(Error::Precondition("market has transaction costs".into()));
    }
    Ok(())
}

/// `Σ x^i`.
pub fn scalarize(tree: &ScenarioTree, x: &[Rat]) -> Result<Rat> {
    require_frictionless(tree)?;
    check_dim(tree.dimension(), x.len())?;
    Ok(x.iter().sum())
}

/// `C_H = Σ H^i` per leaf, in [`ScenarioTree::leaves`] order.
pub fn scalarize_claim(tree: &ScenarioTree, claim: &Claim) -> Result<Vec<Rat>> {
    require_frictionless(tree)?;
    tree.leaves().iter().map(|&l| Ok(payoff(tree, claim, l)?.iter().sum())).collect()
}

/// `X_t = Σ V_t^i` per node.
pub fn scalarize_path(tree: &ScenarioTree, path: &WealthPath) -> Result<Vec<Rat>> {
    require_frictionless(tree)?;
    check_dim(tree.len(), path.values.len())?;
    Ok(path.values.iter().map(|v| v.iter().sum()).collect())
}

/// Scalar success `1` if `x ≥ c`, else `x / c`.
pub fn scalar_success(x: &Rat, c: &Rat) -> Rat {
    if x >= c {
        Rat::one()
    } else {
        x / c
    }
}

/// Leaf positions below every node.
fn leaves_below(tree: &ScenarioTree) -> Vec<Vec<usize>> {
    let mut below = vec![Vec::new(); tree.len()];
    for (pos, &l) in tree.leaves().iter().enumerate() {
        for n in tree.path(l) {
            below[n].push(pos);
        }
    }
    below
}

/// Path-measure variables `q ≥ 0` summing to one, under which every price is a martingale.
fn martingale_lp(tree: &ScenarioTree, lp: &mut LpProblem) -> Vec<VarId> {
    let q: Vec<VarId> = tree.leaves().iter().map(|_| lp.add_nonneg()).collect();
    lp.add_constraint(q.iter().map(|&v| (v, Rat::one())).collect(), Relation::Eq, Rat::one());
    let below = leaves_below(tree);
    for (k, node) in tree.nodes().iter().enumerate() {
        if node.is_leaf() {
            continue;
        }
        for i in 0..tree.dimension() {
            // Σ_c S_c·q(c) = S_n·q(n)
            let mut coeffs: Vec<Rat> = vec![Rat::zero(); q.len()];
            for &c in &node.children {
                for &pos in &below[c] {
                    coeffs[pos] += &tree.node(c).prices[i];
                }
            }
            for &pos in &below[k] {
                coeffs[pos] -= &node.prices[i];
            }
            let row = q.iter().zip(coeffs).filter(|(_, a)| !a.is_zero()).map(|(&v, a)| (v, a)).collect();
            lp.add_constraint(row, Relation::Eq, Rat::zero());
        }
    }
    q
}

/// `max E^Q[C]` over martingale measures; `c` per leaf.
pub fn emm_price(tree: &ScenarioTree, c: &[Rat]) -> Result<Rat> {
    require_frictionless(tree)?;
    check_dim(tree.leaves().len(), c.len())?;
    let mut lp = LpProblem::new(Sense::Maximize);
    let q = martingale_lp(tree, &mut lp);
    lp.set_objective(q.iter().zip(c).map(|(&v, x)| (v, x.clone())).collect());
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.unwrap()),
        LpStatus::Infeasible => Err(Error::EmmViolated),
        LpStatus::Unbounded => Err(Error::Internal("martingale measure LP unbounded".into())),
    }
}

/// Whether a martingale measure charges every leaf.
pub fn has_strict_emm(tree: &ScenarioTree) -> Result<bool> {
    let mut lp = LpProblem::new(Sense::Maximize);
    let q = martingale_lp(tree, &mut lp);
    let t = lp.add_var(None, Some(Rat::one()));
    for &v in &q {
        lp.add_constraint(vec![(v, Rat::one()), (t, -Rat::one())], Relation::Ge, Rat::zero());
    }
    lp.set_objective(vec![(t, Rat::one())]);
    let sol = solve_lp(&lp)?;
    Ok(sol.status == LpStatus::Optimal && sol.value.unwrap().is_positive())
}

/// Unique solution of `a·x = b`, if any.
fn solve_unique(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let cols = a.first().map_or(0, Vec::len);
    let mut row = 0;
    for col in 0..cols {
        let pivot = (row..a.len()).find(|&r| !a[r][col].is_zero())?;
        a.swap(row, pivot);
        b.swap(row, pivot);
        let inv = a[row][col].recip();
        for x in a[row].iter_mut() {
            *x *= &inv;
        }
        b[row] *= &inv;
        for r in 0..a.len() {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for k in 0..cols {
                    let delta = &f * &a[row][k];
                    a[r][k] -= delta;
                }
                let delta = &f * &b[row];
                b[r] -= delta;
            }
        }
        row += 1;
    }
    if b[row..].iter().any(|x| !x.is_zero()) {
        return None;
    }
    Some(b[..cols].to_vec())
}

/// Vertices of the one-period martingale kernels at an inner node.
fn kernel_vertices(tree: &ScenarioTree, k: usize) -> Vec<Vec<Rat>> {
    let node = tree.node(k);
    let m = node.children.len();
    let mut found = BTreeSet::new();
    for mask in 1u64..(1u64 << m) {
        let support: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
        let mut a = vec![support.iter().map(|_| Rat::one()).collect::<Vec<_>>()];
        let mut b = vec![Rat::one()];
        for i in 0..tree.dimension() {
            a.push(support.iter().map(|&j| tree.node(node.children[j]).prices[i].clone()).collect());
            b.push(node.prices[i].clone());
        }
        if let Some(r) = solve_unique(a, b) {
            if r.iter().all(|x| !x.is_negative()) {
                let mut full = vec![Rat::zero(); m];
                for (&j, x) in support.iter().zip(r) {
                    full[j] = x;
                }
                found.insert(full);
            }
        }
    }
    found.into_iter().collect()
}

pub const MAX_EXTREME_MEASURES: usize = 100_000;

/// Extreme martingale measures as path measures (leaf order). Each is a
/// product of vertex kernels along the reached nodes.
pub fn extreme_martingale_measures(tree: &ScenarioTree) -> Result<Vec<Vec<Rat>>> {
    require_frictionless(tree)?;
    let n = tree.leaves().len();
    let mut memo: Vec<Option<Vec<Vec<(usize, Rat)>>>> = vec![None; tree.len()];
    // Children come after parents, so a reverse sweep sees children first.
    for k in (0..tree.len()).rev() {
        let node = tree.node(k);
        let measures = if node.is_leaf() {
            vec![vec![(tree.leaf_position(k).unwrap(), Rat::one())]]
        } else {
            let mut out = Vec::new();
            for r in kernel_vertices(tree, k) {
                let mut partial: Vec<Vec<(usize, Rat)>> = vec![Vec::new()];
                for (&c, rc) in node.children.iter().zip(&r) {
                    if rc.is_zero() {
                        continue;
                    }
                    let sub = memo[c].as_ref().unwrap();
                    let mut next = Vec::with_capacity(partial.len() * sub.len());
                    for p in &partial {
                        for s in sub {
                            let mut m = p.clone();
                            m.extend(s.iter().map(|(pos, x)| (*pos, rc * x)));
                            next.push(m);
                        }
                    }
                    if next.len() > MAX_EXTREME_MEASURES {
                        return Err(Error::Precondition("too many extreme martingale measures".into()));
                    }
                    partial = next;
                }
                out.extend(partial);
            }
            if out.is_empty() {
                return Err(Error::EmmViolated);
            }
            out
        };
        memo[k] = Some(measures);
    }
    let measures: BTreeSet<Vec<Rat>> = memo[0]
        .take()
        .unwrap()
        .into_iter()
        .map(|sparse| {
            let mut q = vec![Rat::zero(); n];
            for (pos, x) in sparse {
                q[pos] = x;
            }
            q
        })
        .collect();
    Ok(measures.into_iter().collect())
}

/// `φ ∈ [0,1]` per leaf with `E^{q}[C·φ] ≤ x` for every extreme measure.
fn scalar_budget_lp(tree: &ScenarioTree, c: &[Rat], sense: Sense) -> Result<(LpProblem, Vec<VarId>, VarId)> {
    check_dim(tree.leaves().len(), c.len())?;
    let measures = extreme_martingale_measures(tree)?;
    let mut lp = LpProblem::new(sense);
    let phi: Vec<VarId> = c.iter().map(|_| lp.add_var(Some(Rat::zero()), Some(Rat::one()))).collect();
    let x = lp.add_free();
    for q in &measures {
        let mut row: Vec<(VarId, Rat)> =
            phi.iter().zip(q).zip(c).map(|((&p, qi), ci)| (p, qi * ci)).filter(|(_, a)| !a.is_zero()).collect();
        row.push((x, -Rat::one()));
        lp.add_constraint(row, Relation::Le, Rat::zero());
    }
    Ok((lp, phi, x))
}

fn expectation_terms(tree: &ScenarioTree, phi: &[VarId]) -> Vec<(VarId, Rat)> {
    tree.leaves().iter().zip(phi).map(|(&l, &p)| (p, tree.path_prob(l).clone())).collect()
}

/// Scalar quantile hedging: `max E[φ]` with `sup_Q E^Q[C·φ] ≤ x0`.
pub fn scalar_max_effectiveness(tree: &ScenarioTree, c: &[Rat], x0: &Rat) -> Result<Rat> {
    require_frictionless(tree)?;
    let (mut lp, phi, x) = scalar_budget_lp(tree, c, Sense::Maximize)?;
    lp.add_constraint(vec![(x, Rat::one())], Relation::Eq, x0.clone());
    lp.set_objective(expectation_terms(tree, &phi));
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.unwrap()),
        _ => Err(Error::Precondition(format!("scalar capital {x0} admits no admissible strategy"))),
    }
}

/// Cost-minimizing capital `γ = min{x : ∃φ, E[φ] ≥ 1 − ε, sup_Q E^Q[C·φ] ≤ x}`.
pub fn scalar_gamma(tree: &ScenarioTree, c: &[Rat], eps: &Rat) -> Result<Rat> {
    require_frictionless(tree)?;
    let (mut lp, phi, x) = scalar_budget_lp(tree, c, Sense::Minimize)?;
    lp.add_constraint(expectation_terms(tree, &phi), Relation::Ge, Rat::one() - eps);
    lp.set_objective(vec![(x, Rat::one())]);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.value.unwrap()),
        LpStatus::Infeasible => Err(Error::Precondition(format!("ε = {eps} out of range"))),
        LpStatus::Unbounded => Err(Error::Internal("γ unbounded".into())),
    }
}

#[derive(Debug, Clone)]
pub struct FlOptions {
    pub eps: Rat,
    /// Random admissible strategies compared in the success-function check.
    pub samples: usize,
    pub seed: u64,
}

impl Default for FlOptions {
    fn default() -> Self {
        FlOptions { eps: Rat::new(1, 4), samples: 20, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlReport {
    /// Strategies whose success functions were compared.
    pub strategies_checked: usize,
    /// `(strategy index, leaf id, multi-asset φ, scalar φ)` per disagreement.
    pub success_mismatches: Vec<(usize, String, Rat, Rat)>,
    pub value: Rat,
    pub scalar_value: Rat,
    pub eps: Rat,
    /// Least `Σv` over `Γ_ε(H)`, from the multi-asset LP.
    pub min_capital: Rat,
    pub gamma: Rat,
}

impl FlReport {
    pub fn success_functions_agree(&self) -> bool {
        self.success_mismatches.is_empty()
    }

    pub fn values_agree(&self) -> bool {
        self.value == self.scalar_value
    }

    pub fn capitals_agree(&self) -> bool {
        self.min_capital == self.gamma
    }

    pub fn passed(&self) -> bool {
        self.success_functions_agree() && self.values_agree() && self.capitals_agree()
    }
}

impl fmt::Display for FlReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
        writeln!(
            f,
            "success functions  {}  ({} strategies, {} mismatches)",
            mark(self.success_functions_agree()),
            self.strategies_checked,
            self.success_mismatches.len()
        )?;
        for (s, leaf, multi, scalar) in &self.success_mismatches {
            writeln!(f, "  strategy {s} leaf {leaf}: {multi} vs {scalar}")?;
        }
        writeln!(f, "max effectiveness  {}  ({} vs {})", mark(self.values_agree()), self.value, self.scalar_value)?;
        write!(f, "min capital ε={}  {}  ({} vs {})", self.eps, mark(self.capitals_agree()), self.min_capital, self.gamma)
    }
}

/// Multi-asset success at one leaf, by definition: one on domination, else
/// the best proportional-transfer ratio.
fn multi_success(v: &[Rat], h: &[Rat], tree: &ScenarioTree, leaf: usize) -> Result<Rat> {
    let costs = &tree.node(leaf).costs;
    if dominates(v, h, costs)? {
        return Ok(Rat::one());
    }
    Ok(max_transfer_ratio(v, h, costs)?.0)
}

/// Checks the zero-cost reduction on one instance: success functions of
/// sampled strategies, the quantile optimum, and the capital needed for
/// effectiveness `1 − ε`.
pub fn verify_fl_correspondence(tree: &ScenarioTree, claim: &Claim, v0: &[Rat], opts: &FlOptions) -> Result<FlReport> {
    require_frictionless(tree)?;
    check_dim(tree.dimension(), v0.len())?;
    let c = scalarize_claim(tree, claim)?;
    let x0 = scalarize(tree, v0)?;

    let PartialHedge { strategy: witness, value, .. } = maximize_effectiveness(tree, claim, v0)?;
    let scalar_value = scalar_max_effectiveness(tree, &c, &x0)?;

    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut strategies: Vec<Strategy> = vec![Strategy::zero(tree), witness];
    for _ in 0..opts.samples {
        strategies.push(sample_long_only_strategy(tree, v0, 8, &mut rng)?);
    }
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for (s, strategy) in strategies.iter().enumerate() {
        let path = run_strategy(tree, v0, strategy)?;
        if !is_admissible(tree, &path)? {
            continue;
        }
        checked += 1;
        let x = scalarize_path(tree, &path)?;
        for (pos, &l) in tree.leaves().iter().enumerate() {
            let multi = multi_success(path.at(l), payoff(tree, claim, l)?, tree, l)?;
            let scalar = scalar_success(&x[l], &c[pos]);
            if multi != scalar {
                mismatches.push((s, tree.node(l).id.clone(), multi, scalar));
            }
        }
    }

    let mut e1 = vec![Rat::zero(); tree.dimension()];
    e1[0] = Rat::one();
    let min_capital = min_capital_eps(tree, claim, &e1, &opts.eps)?;
    let gamma = scalar_gamma(tree, &c, &opts.eps)?;
    Ok(FlReport {
        strategies_checked: checked,
        success_mismatches: mismatches,
        value,
        scalar_value,
        eps: opts.eps.clone(),
        min_capital,
        gamma,
    })
}
