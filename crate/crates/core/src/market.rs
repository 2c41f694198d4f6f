//! Finite filtered market: a scenario tree carrying prices and transaction
//! costs at every node, plus contingent claims paid at the leaves.
//!
//! Markets are read from a JSON document:
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "horizon": 1,
//!   "nodes": [
//!     {"id": "0", "parent": null, "prob": "1", "prices": ["1", "1"],
//!      "costs": [["0", "1/10"], ["1/10", "0"]]},
//!     {"id": "u", "parent": "0", "prob": "1/2", "prices": ["1", "2"], "costs": ...},
//!     {"id": "d", "parent": "0", "prob": "1/2", "prices": ["1", "1/2"], "costs": ...}
//!   ],
//!   "claim": [{"node": "u", "payoff": ["1", "0"]}, {"node": "d", "payoff": ["0", "0"]}]
//! }
//! ```
//!
//! `prob` is the conditional probability of reaching a node from its parent.
//! All numbers are strings holding `p/q` fractions or finite decimals.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cone;
use crate::error::{Error, Result};
use crate::rat::Rat;

/// Proportional transaction costs `λ^{ij}` for moving value from account `i`
/// into account `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostMatrix {
    entries: Vec<Vec<Rat>>,
}

impl CostMatrix {
    pub fn zero(d: usize) -> Self {
        CostMatrix { entries: vec![vec![Rat::zero(); d]; d] }
    }

    /// Same cost `lambda` on every off-diagonal pair.
    pub fn uniform(d: usize, lambda: Rat) -> Self {
        let mut m = Self::zero(d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    m.entries[i][j] = lambda.clone();
                }
            }
        }
        m
    }

    /// Unchecked; see [`CostMatrix::violations`].
    pub fn from_rows(entries: Vec<Vec<Rat>>) -> Self {
        CostMatrix { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.entries[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Rat) {
        self.entries[i][j] = value;
    }

    pub fn rows(&self) -> &[Vec<Rat>] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().flatten().all(Rat::is_zero)
    }

    fn violations(&self) -> Vec<ViolationKind> {
        let mut out = Vec::new();
        for (i, row) in self.entries.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if i == j && !x.is_zero() {
                    out.push(ViolationKind::NonZeroDiagonalCost { i });
                } else if x.is_negative() {
                    out.push(ViolationKind::NegativeCost { i, j });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub time: usize,
    /// Conditional probability given the parent.
    pub prob: Rat,
    pub prices: Vec<Rat>,
    pub costs: CostMatrix,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted scenario tree. Node 0 is the root and nodes are stored in
/// breadth-first order, so every parent precedes its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioTree {
    dimension: usize,
    horizon: usize,
    nodes: Vec<Node>,
    leaves: Vec<usize>,
    path_probs: Vec<Rat>,
    index: HashMap<String, usize>,
}

/// Terminal payoff vectors, keyed by leaf index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Claim {
    pub payoffs: BTreeMap<usize, Vec<Rat>>,
}

impl Claim {
    pub fn payoff(&self, leaf: usize) -> Option<&[Rat]> {
        self.payoffs.get(&leaf).map(Vec::as_slice)
    }

    /// The zero claim on every leaf of `tree`.
    pub fn zero(tree: &ScenarioTree) -> Claim {
        Claim { payoffs: tree.leaves().iter().map(|&l| (l, vec![Rat::zero(); tree.dimension()])).collect() }
    }

    /// Leafwise product `H(ω)·φ(ω)`; `phi` is aligned with `tree.leaves()`.
    pub fn scaled(&self, tree: &ScenarioTree, phi: &[Rat]) -> Claim {
        let payoffs = tree
            .leaves()
            .iter()
            .zip(phi)
            .map(|(&l, p)| {
                let h = self.payoffs.get(&l).cloned().unwrap_or_else(|| vec![Rat::zero(); tree.dimension()]);
                (l, h.iter().map(|x| x * p).collect())
            })
            .collect();
        Claim { payoffs }
    }

    pub fn is_zero(&self) -> bool {
        self.payoffs.values().flatten().all(Rat::is_zero)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    NonPositivePrice { asset: usize },
    NonPositiveProbability,
    ProbabilitySum { sum: Rat },
    RootProbability,
    LeafBeforeHorizon { time: usize },
    HorizonMismatch { declared: usize, actual: usize },
    NegativeCost { i: usize, j: usize },
    NonZeroDiagonalCost { i: usize },
    ClaimOnInnerNode,
    ClaimMissing,
    ClaimNotSolvent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(node) = &self.node {
            write!(f, "node {node}: ")?;
        }
        match &self.kind {
            ViolationKind::NonPositivePrice { asset } => write!(f, "non-positive price for asset {}", asset + 1),
            ViolationKind::NonPositiveProbability => write!(f, "non-positive conditional probability"),
            ViolationKind::ProbabilitySum { sum } => write!(f, "probabilities sum ≠ 1 (children sum to {sum})"),
            ViolationKind::RootProbability => write!(f, "root probability must be 1"),
            ViolationKind::LeafBeforeHorizon { time } => write!(f, "leaf at time {time} before the horizon"),
            ViolationKind::HorizonMismatch { declared, actual } => {
                write!(f, "declared horizon {declared} but tree depth is {actual}")
            }
            ViolationKind::NegativeCost { i, j } => write!(f, "negative cost λ[{},{}]", i + 1, j + 1),
            ViolationKind::NonZeroDiagonalCost { i } => write!(f, "non-zero diagonal cost λ[{0},{0}]", i + 1),
            ViolationKind::ClaimOnInnerNode => write!(f, "claim attached to a non-terminal node"),
            ViolationKind::ClaimMissing => write!(f, "claim undefined on this leaf"),
            ViolationKind::ClaimNotSolvent => write!(f, "claim not ⪰_T 0"),
        }
    }
}

impl ScenarioTree {
    /// Builds the tree structure. Fails on structural problems (duplicate or
    /// unknown ids, several roots, cycles, wrong vector sizes); value-level
    /// invariants are left to [`validate`].
    pub fn new(dimension: usize, horizon: usize, raw: Vec<RawNode>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Schema("dimension must be positive".into()));
        }
        let mut by_id: HashMap<String, usize> = HashMap::new();
        for (k, n) in raw.iter().enumerate() {
            if by_id.insert(n.id.0.clone(), k).is_some() {
                return Err(Error::Schema(format!("duplicate node id {}", n.id.0)));
            }
            if n.prices.len() != dimension {
                return Err(Error::Schema(format!(
                    "node {}: prices has {} entries, expected {dimension}",
                    n.id.0,
                    n.prices.len()
                )));
            }
            if n.costs.len() != dimension || n.costs.iter().any(|r| r.len() != dimension) {
                return Err(Error::Schema(format!("node {}: costs must be a {dimension}x{dimension} array", n.id.0)));
            }
        }
        let mut roots = raw.iter().enumerate().filter(|(_, n)| n.parent.is_none()).map(|(k, _)| k);
        let root = roots.next().ok_or_else(|| Error::Schema("no root node (parent null)".into()))?;
        if let Some(extra) = roots.next() {
            return Err(Error::Schema(format!("second root node {}", raw[extra].id.0)));
        }
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); raw.len()];
        for (k, n) in raw.iter().enumerate() {
            if let Some(p) = &n.parent {
                let pk = *by_id
                    .get(&p.0)
                    .ok_or_else(|| Error::Schema(format!("node {}: unknown parent {}", n.id.0, p.0)))?;
                kids[pk].push(k);
            }
        }

        // Breadth-first relabelling; children keep file order.
        let mut order = vec![root];
        let mut new_index = vec![usize::MAX; raw.len()];
        new_index[root] = 0;
        let mut head = 0;
        while head < order.len() {
            let k = order[head];
            head += 1;
            for &c in &kids[k] {
                new_index[c] = order.len();
                order.push(c);
            }
        }
        if order.len() != raw.len() {
            let stray = raw.iter().enumerate().find(|(k, _)| new_index[*k] == usize::MAX).map(|(_, n)| &n.id.0);
            return Err(Error::Schema(format!("node {} is not connected to the root", stray.unwrap())));
        }

        let mut raw: Vec<Option<RawNode>> = raw.into_iter().map(Some).collect();
        let mut nodes: Vec<Node> = Vec::with_capacity(order.len());
        for &k in &order {
            let r = raw[k].take().unwrap();
            let parent = r.parent.as_ref().map(|p| new_index[by_id[&p.0]]);
            let time = parent.map_or(0, |p| nodes[p].time + 1);
            nodes.push(Node {
                id: r.id.0,
                parent,
                children: kids[k].iter().map(|&c| new_index[c]).collect(),
                time,
                prob: r.prob,
                prices: r.prices,
                costs: CostMatrix::from_rows(r.costs),
            });
        }
        Ok(Self::from_nodes(dimension, horizon, nodes))
    }

    fn from_nodes(dimension: usize, horizon: usize, nodes: Vec<Node>) -> Self {
        let leaves: Vec<usize> = (0..nodes.len()).filter(|&k| nodes[k].is_leaf()).collect();
        let mut path_probs = vec![Rat::one(); nodes.len()];
        for k in 1..nodes.len() {
            let p = nodes[k].parent.unwrap();
            path_probs[k] = &path_probs[p] * &nodes[k].prob;
        }
        let index = nodes.iter().enumerate().map(|(k, n)| (n.id.clone(), k)).collect();
        ScenarioTree { dimension, horizon, nodes, leaves, path_probs, index }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &Node {
        &self.nodes[k]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf indices in breadth-first order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Unconditional probability of reaching node `k`.
    pub fn path_prob(&self, k: usize) -> &Rat {
        &self.path_probs[k]
    }

    /// Node indices from the root down to `k`, inclusive.
    pub fn path(&self, k: usize) -> Vec<usize> {
        let mut path = vec![k];
        let mut cur = k;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Position of `leaf` within [`ScenarioTree::leaves`].
    pub fn leaf_position(&self, leaf: usize) -> Option<usize> {
        self.leaves.binary_search(&leaf).ok()
    }

    pub fn root_prices(&self) -> &[Rat] {
        &self.nodes[0].prices
    }

    /// A copy with every cost matrix replaced by `costs`.
    pub fn with_costs(&self, costs: &CostMatrix) -> ScenarioTree {
        let nodes = self.nodes.iter().map(|n| Node { costs: costs.clone(), ..n.clone() }).collect();
        Self::from_nodes(self.dimension, self.horizon, nodes)
    }
}

/// Node id as it appears in a file: a string, or an integer taken verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeRef(pub String);

impl<'de> Deserialize<'de> for NodeRef {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            S(String),
            I(i64),
        }
        Ok(NodeRef(match Repr::deserialize(deserializer)? {
            Repr::S(s) => s,
            Repr::I(i) => i.to_string(),
        }))
    }
}

impl Serialize for NodeRef {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: NodeRef,
    pub parent: Option<NodeRef>,
    pub prob: Rat,
    pub prices: Vec<Rat>,
    pub costs: Vec<Vec<Rat>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPayoff {
    pub node: NodeRef,
    pub payoff: Vec<Rat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    dimension: usize,
    horizon: usize,
    nodes: Vec<RawNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claim: Option<Vec<RawPayoff>>,
}

fn json_error(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => Error::Schema(e.to_string()),
        _ => Error::Syntax(e.to_string()),
    }
}

/// Attaches raw payoffs to the leaves of `tree`.
pub fn build_claim(tree: &ScenarioTree, raw: Vec<RawPayoff>) -> Result<Claim> {
    let mut payoffs = BTreeMap::new();
    for p in raw {
        let k = tree.find(&p.node.0).ok_or_else(|| Error::Schema(format!("claim references unknown node {}", p.node.0)))?;
        if p.payoff.len() != tree.dimension() {
            return Err(Error::Schema(format!(
                "claim at node {}: payoff has {} entries, expected {}",
                p.node.0,
                p.payoff.len(),
                tree.dimension()
            )));
        }
        if payoffs.insert(k, p.payoff).is_some() {
            return Err(Error::Schema(format!("duplicate claim entry for node {}", p.node.0)));
        }
    }
    Ok(Claim { payoffs })
}

/// Parses the structure of a market file without checking value invariants.
pub fn parse_market(text: &str) -> Result<(ScenarioTree, Option<Claim>)> {
    let raw: RawMarket = serde_json::from_str(text).map_err(json_error)?;
    let tree = ScenarioTree::new(raw.dimension, raw.horizon, raw.nodes)?;
    let claim = raw.claim.map(|c| build_claim(&tree, c)).transpose()?;
    Ok((tree, claim))
}

/// Parses and fully validates a market file.
pub fn load_market(text: &str) -> Result<(ScenarioTree, Option<Claim>)> {
    let (tree, claim) = parse_market(text)?;
    let report = validate(&tree, claim.as_ref())?;
    if !report.is_empty() {
        return Err(Error::Invalid(report));
    }
    Ok((tree, claim))
}

/// Parses a standalone claim file without checking value invariants.
pub fn parse_claim(tree: &ScenarioTree, text: &str) -> Result<Claim> {
    let raw: Vec<RawPayoff> = serde_json::from_str(text).map_err(json_error)?;
    build_claim(tree, raw)
}

/// Parses a standalone claim file: a JSON array of `{node, payoff}`.
pub fn load_claim(tree: &ScenarioTree, text: &str) -> Result<Claim> {
    let claim = parse_claim(tree, text)?;
    let report = validate_claim(tree, &claim)?;
    if !report.is_empty() {
        return Err(Error::Invalid(report));
    }
    Ok(claim)
}

/// Every violated invariant of `tree` (and `claim`, if given). Empty iff valid.
pub fn validate(tree: &ScenarioTree, claim: Option<&Claim>) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    let at = |k: usize, kind| Violation { node: Some(tree.nodes[k].id.clone()), kind };
    let depth = tree.nodes.iter().map(|n| n.time).max().unwrap_or(0);
    if depth != tree.horizon {
        out.push(Violation { node: None, kind: ViolationKind::HorizonMismatch { declared: tree.horizon, actual: depth } });
    }
    for (k, n) in tree.nodes.iter().enumerate() {
        if k == 0 {
            if n.prob != Rat::one() {
                out.push(at(k, ViolationKind::RootProbability));
            }
        } else if !n.prob.is_positive() {
            out.push(at(k, ViolationKind::NonPositiveProbability));
        }
        for (i, s) in n.prices.iter().enumerate() {
            if !s.is_positive() {
                out.push(at(k, ViolationKind::NonPositivePrice { asset: i }));
            }
        }
        out.extend(n.costs.violations().into_iter().map(|v| at(k, v)));
        if !n.is_leaf() {
            let sum: Rat = n.children.iter().map(|&c| &tree.nodes[c].prob).sum();
            if sum != Rat::one() {
                out.push(at(k, ViolationKind::ProbabilitySum { sum }));
            }
        } else if n.time != tree.horizon {
            out.push(at(k, ViolationKind::LeafBeforeHorizon { time: n.time }));
        }
    }
    if let Some(claim) = claim {
        // Cone checks need sane cost matrices.
        if out.iter().all(|v| !matches!(v.kind, ViolationKind::NegativeCost { .. } | ViolationKind::NonZeroDiagonalCost { .. })) {
            out.extend(validate_claim(tree, claim)?);
        }
    }
    Ok(out)
}

fn validate_claim(tree: &ScenarioTree, claim: &Claim) -> Result<Vec<Violation>> {
    let mut out = Vec::new();
    let at = |k: usize, kind| Violation { node: Some(tree.nodes[k].id.clone()), kind };
    for &k in claim.payoffs.keys() {
        if !tree.nodes[k].is_leaf() {
            out.push(at(k, ViolationKind::ClaimOnInnerNode));
        }
    }
    for &l in &tree.leaves {
        match claim.payoff(l) {
            None => out.push(at(l, ViolationKind::ClaimMissing)),
            Some(h) => {
                let zero = vec![Rat::zero(); tree.dimension];
                if !cone::dominates(h, &zero, &tree.nodes[l].costs)? {
                    out.push(at(l, ViolationKind::ClaimNotSolvent));
                }
            }
        }
    }
    Ok(out)
}

fn raw_payoffs(tree: &ScenarioTree, claim: &Claim) -> Vec<RawPayoff> {
    claim
        .payoffs
        .iter()
        .map(|(&k, h)| RawPayoff { node: NodeRef(tree.nodes[k].id.clone()), payoff: h.clone() })
        .collect()
}

/// Serializes back into the market file format.
pub fn serialize_market(tree: &ScenarioTree, claim: Option<&Claim>) -> String {
    let raw = RawMarket {
        dimension: tree.dimension,
        horizon: tree.horizon,
        nodes: tree
            .nodes
            .iter()
            .map(|n| RawNode {
                id: NodeRef(n.id.clone()),
                parent: n.parent.map(|p| NodeRef(tree.nodes[p].id.clone())),
                prob: n.prob.clone(),
                prices: n.prices.clone(),
                costs: n.costs.rows().to_vec(),
            })
            .collect(),
        claim: claim.map(|c| raw_payoffs(tree, c)),
    };
    serde_json::to_string_pretty(&raw).expect("market serializes")
}

pub fn serialize_claim(tree: &ScenarioTree, claim: &Claim) -> String {
    serde_json::to_string_pretty(&raw_payoffs(tree, claim)).expect("claim serializes")
}
