//! Self-financing strategies on a scenario tree.
//!
//! Wealth is held in value terms, one account per asset. Between a node and
//! its child each account is revalued by the price ratio, then the child's
//! transfers are applied:
//!
//! `V_n = V_parent ⊙ S_n / S_parent + ΔB_n`, with `V_root = v + ΔB_root`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{self, check_dim, transfer_pairs};
use crate::error::{Error, Result};
use crate::market::{CostMatrix, NodeRef, ScenarioTree};
use crate::rat::Rat;

/// Transfer increments `ΔL^{ij}`: value delivered into account `j` from account `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferMatrix {
    entries: Vec<Vec<Rat>>,
}

impl TransferMatrix {
    pub fn zero(d: usize) -> Self {
        TransferMatrix { entries: vec![vec![Rat::zero(); d]; d] }
    }

    pub fn from_rows(entries: Vec<Vec<Rat>>) -> Result<Self> {
        let d = entries.len();
        for (i, row) in entries.iter().enumerate() {
            check_dim(d, row.len())?;
            for (j, x) in row.iter().enumerate() {
                if x.is_negative() || (i == j && !x.is_zero()) {
                    return Err(Error::Schema(format!("transfer [{},{}] = {x} must be non-negative off the diagonal and zero on it", i + 1, j + 1)));
                }
            }
        }
        Ok(TransferMatrix { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.entries[i][j]
    }

    /// Panics on a negative value or a diagonal entry.
    pub fn set(&mut self, i: usize, j: usize, value: Rat) {
        assert!(i != j && !value.is_negative(), "invalid transfer entry");
        self.entries[i][j] = value;
    }

    pub fn rows(&self) -> &[Vec<Rat>] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(Rat::is_zero)
    }

    fn add(&self, other: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }
}

/// One transfer matrix per tree node, indexed like [`ScenarioTree::nodes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    pub actions: Vec<TransferMatrix>,
}

impl Strategy {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Strategy { actions: vec![TransferMatrix::zero(tree.dimension()); tree.len()] }
    }

    pub fn sum(&self, other: &Strategy) -> Strategy {
        Strategy { actions: self.actions.iter().zip(&other.actions).map(|(a, b)| a.add(b)).collect() }
    }
}

/// Wealth vector at every node, after that node's transfers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WealthPath {
    pub values: Vec<Vec<Rat>>,
}

impl WealthPath {
    pub fn at(&self, node: usize) -> &[Rat] {
        &self.values[node]
    }
}

/// `ΔB^i = Σ_j ΔL^{ji} − Σ_j (1 + λ^{ij}) ΔL^{ij}`.
pub fn transfer_effect(transfers: &TransferMatrix, costs: &CostMatrix) -> Result<Vec<Rat>> {
    let d = costs.dim();
    check_dim(d, transfers.dim())?;
    let mut out = vec![Rat::zero(); d];
    for (i, j) in transfer_pairs(d) {
        let l = transfers.get(i, j);
        if l.is_zero() {
            continue;
        }
        out[j] += l;
        out[i] -= (Rat::one() + costs.get(i, j)) * l;
    }
    Ok(out)
}

pub fn run_strategy(tree: &ScenarioTree, v: &[Rat], strategy: &Strategy) -> Result<WealthPath> {
    let d = tree.dimension();
    check_dim(d, v.len())?;
    check_dim(tree.len(), strategy.actions.len())?;
    let mut values: Vec<Vec<Rat>> = Vec::with_capacity(tree.len());
    for (k, node) in tree.nodes().iter().enumerate() {
        let mut w: Vec<Rat> = match node.parent {
            None => v.to_vec(),
            Some(p) => {
                let parent = tree.node(p);
                (0..d).map(|i| &values[p][i] * &node.prices[i] / &parent.prices[i]).collect()
            }
        };
        let db = transfer_effect(&strategy.actions[k], &node.costs)?;
        for (x, b) in w.iter_mut().zip(db) {
            *x += b;
        }
        values.push(w);
    }
    Ok(WealthPath { values })
}

/// Terminal solvency at every leaf.
pub fn is_admissible(tree: &ScenarioTree, path: &WealthPath) -> Result<bool> {
    first_insolvent_leaf(tree, path).map(|l| l.is_none())
}

pub(crate) fn first_insolvent_leaf(tree: &ScenarioTree, path: &WealthPath) -> Result<Option<usize>> {
    let zero = vec![Rat::zero(); tree.dimension()];
    for &l in tree.leaves() {
        if !cone::dominates(path.at(l), &zero, &tree.node(l).costs)? {
            return Ok(Some(l));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    node: NodeRef,
    transfers: Vec<Vec<Rat>>,
}

/// Parses a strategy file: a JSON array of `{node, transfers}` entries.
/// Nodes without an entry take the zero action.
pub fn load_strategy(tree: &ScenarioTree, text: &str) -> Result<Strategy> {
    let raw: Vec<RawAction> = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(e.to_string()),
        _ => Error::Syntax(e.to_string()),
    })?;
    let mut strategy = Strategy::zero(tree);
    let mut seen = vec![false; tree.len()];
    for a in raw {
        let k = tree.find(&a.node.0).ok_or_else(|| Error::Schema(format!("strategy references unknown node {}", a.node.0)))?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::Schema(format!("duplicate strategy entry for node {}", a.node.0)));
        }
        let m = TransferMatrix::from_rows(a.transfers)?;
        check_dim(tree.dimension(), m.dim())?;
        strategy.actions[k] = m;
    }
    Ok(strategy)
}

/// Serializes every node's action, including zero ones.
pub fn serialize_strategy(tree: &ScenarioTree, strategy: &Strategy) -> String {
    let raw: Vec<RawAction> = tree
        .nodes()
        .iter()
        .zip(&strategy.actions)
        .map(|(n, a)| RawAction { node: NodeRef(n.id.clone()), transfers: a.rows().to_vec() })
        .collect();
    serde_json::to_string_pretty(&raw).expect("strategy serializes")
}

/// Draws a strategy that never sells more of an account than it holds, so
/// that starting from `v >= 0` every account stays non-negative and the
/// strategy is admissible. Fractions are multiples of `1/grid`.
pub fn sample_long_only_strategy<R: Rng + ?Sized>(
    tree: &ScenarioTree,
    v: &[Rat],
    grid: i64,
    rng: &mut R,
) -> Result<Strategy> {
    let d = tree.dimension();
    check_dim(d, v.len())?;
    let mut strategy = Strategy::zero(tree);
    let mut values: Vec<Vec<Rat>> = Vec::with_capacity(tree.len());
    for (k, node) in tree.nodes().iter().enumerate() {
        let mut w: Vec<Rat> = match node.parent {
            None => v.to_vec(),
            Some(p) => (0..d).map(|i| &values[p][i] * &node.prices[i] / &tree.node(p).prices[i]).collect(),
        };
        let mut action = TransferMatrix::zero(d);
        for i in 0..d {
            if !w[i].is_positive() {
                continue;
            }
            // Spend at most the whole account across all targets.
            let mut budget = grid;
            for j in (0..d).filter(|&j| j != i) {
                if budget == 0 || rng.gen_bool(0.4) {
                    continue;
                }
                let share = rng.gen_range(0..=budget);
                budget -= share;
                let spend = &w[i] * Rat::new(share, grid);
                action.set(i, j, spend / (Rat::one() + node.costs.get(i, j)));
            }
        }
        let db = transfer_effect(&action, &node.costs)?;
        for (x, b) in w.iter_mut().zip(db) {
            *x += b;
        }
        strategy.actions[k] = action;
        values.push(w);
    }
    Ok(strategy)
}
