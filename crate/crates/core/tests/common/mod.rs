//! Random market instances shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use qhedge::consistency::find_strict_cps;
use qhedge::frictionless::has_strict_emm;
use qhedge::hedge::min_hedging_capital;
use qhedge::market::{validate, NodeRef, RawNode};
use qhedge::rat::rat;
use qhedge::{Claim, Rat, ScenarioTree};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub dims: &'static [usize],
    pub horizons: &'static [usize],
    pub max_branching: usize,
    pub frictionless: bool,
    pub max_leaves: Option<usize>,
}

impl Shape {
    /// d ∈ {2,3}, T ∈ {1,2}, branching ≤ 3, costs in (0, 1/2].
    pub const FRICTIONAL: Shape =
        Shape { dims: &[2, 3], horizons: &[1, 2], max_branching: 3, frictionless: false, max_leaves: None };
    pub const FRICTIONLESS: Shape = Shape { frictionless: true, ..Shape::FRICTIONAL };
}

pub struct Instance {
    pub tree: ScenarioTree,
    pub claim: Claim,
}

const FACTORS: &[(i64, i64)] = &[(1, 2), (2, 3), (4, 5), (1, 1), (5, 4), (3, 2), (2, 1)];
const COSTS: &[(i64, i64)] = &[(1, 20), (1, 10), (1, 8), (1, 5), (1, 4), (1, 3), (1, 2)];

fn pick(rng: &mut TestRng, xs: &[(i64, i64)]) -> Rat {
    let &(n, d) = xs.choose(rng).unwrap();
    rat(n, d)
}

fn costs(rng: &mut TestRng, d: usize, frictionless: bool) -> Vec<Vec<Rat>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j || frictionless { Rat::zero() } else { pick(rng, COSTS) }).collect())
        .collect()
}

/// Asset 1 is a numeraire with constant price 1.
pub fn random_tree(rng: &mut TestRng, shape: &Shape) -> ScenarioTree {
    let d = *shape.dims.choose(rng).unwrap();
    let horizon = *shape.horizons.choose(rng).unwrap();
    let root_prices: Vec<Rat> = (0..d).map(|i| if i == 0 { Rat::one() } else { pick(rng, &[(1, 1), (3, 2), (2, 1)]) }).collect();
    let mut raw = vec![RawNode {
        id: NodeRef("n0".into()),
        parent: None,
        prob: Rat::one(),
        prices: root_prices.clone(),
        costs: costs(rng, d, shape.frictionless),
    }];
    let mut frontier = vec![(0usize, root_prices)];
    let mut leaves = 1;
    for _ in 0..horizon {
        let mut next = Vec::new();
        for (parent, prices) in frontier {
            let room = shape.max_leaves.map_or(shape.max_branching, |m| (m + 1).saturating_sub(leaves).clamp(1, shape.max_branching));
            let b = rng.gen_range(1..=room.max(1));
            leaves += b - 1;
            let weights: Vec<i64> = (0..b).map(|_| rng.gen_range(1..=3)).collect();
            let total: i64 = weights.iter().sum();
            for w in weights {
                let k = raw.len();
                let child_prices: Vec<Rat> =
                    prices.iter().enumerate().map(|(i, p)| if i == 0 { Rat::one() } else { p * pick(rng, FACTORS) }).collect();
                raw.push(RawNode {
                    id: NodeRef(format!("n{k}")),
                    parent: Some(NodeRef(format!("n{parent}"))),
                    prob: rat(w, total),
                    prices: child_prices.clone(),
                    costs: costs(rng, d, shape.frictionless),
                });
                next.push((k, child_prices));
            }
        }
        frontier = next;
    }
    let tree = ScenarioTree::new(d, horizon, raw).expect("generated tree is well formed");
    assert!(validate(&tree, None).unwrap().is_empty());
    tree
}

/// Strictly positive payoffs on every leaf.
pub fn random_claim(rng: &mut TestRng, tree: &ScenarioTree) -> Claim {
    let payoffs: BTreeMap<usize, Vec<Rat>> = tree
        .leaves()
        .iter()
        .map(|&l| (l, (0..tree.dimension()).map(|_| rat(rng.gen_range(1..=8), 4)).collect()))
        .collect();
    Claim { payoffs }
}

fn no_arbitrage(tree: &ScenarioTree, frictionless: bool) -> bool {
    if frictionless {
        has_strict_emm(tree).unwrap()
    } else {
        find_strict_cps(tree).unwrap().is_some()
    }
}

/// A random instance satisfying strict no-arbitrage.
pub fn random_instance(rng: &mut TestRng, shape: &Shape) -> Instance {
    loop {
        let tree = random_tree(rng, shape);
        if no_arbitrage(&tree, shape.frictionless) {
            let claim = random_claim(rng, &tree);
            return Instance { tree, claim };
        }
    }
}

pub fn unit(d: usize, i: usize) -> Vec<Rat> {
    let mut e = vec![Rat::zero(); d];
    e[i] = Rat::one();
    e
}

/// `θ·x*·e_1` with `x*` the super-hedging price along `e_1` and `θ ∈ (0,1)`:
/// solvent but not hedging.
pub fn budget_below_price(rng: &mut TestRng, inst: &Instance) -> Vec<Rat> {
    let e1 = unit(inst.tree.dimension(), 0);
    let price = min_hedging_capital(&inst.tree, &inst.claim, &e1).unwrap();
    let theta = rat(rng.gen_range(1..=7), 8);
    e1.iter().map(|x| x * &price * &theta).collect()
}

/// Random vector with entries in `[-lo, hi]` on a grid of `1/8`.
pub fn random_vector(rng: &mut TestRng, d: usize, lo: i64, hi: i64) -> Vec<Rat> {
    (0..d).map(|_| rat(rng.gen_range(-8 * lo..=8 * hi), 8)).collect()
}

/// Success levels on a grid of `1/8`.
pub fn random_phi(rng: &mut TestRng, n: usize) -> Vec<Rat> {
    (0..n).map(|_| rat(rng.gen_range(0..=8), 8)).collect()
}

/// Two assets, `S¹ ≡ 1`, `S²: 1 → {2, 1/2}` with probability 1/2 each, cost
/// `lambda` on both pairs; claim `(1,0)` on the up leaf and `(0,0)` down.
pub fn binomial(lambda: &str) -> Instance {
    let c = format!(r#"[["0","{lambda}"],["{lambda}","0"]]"#);
    let text = format!(
        r#"{{"dimension": 2, "horizon": 1, "nodes": [
            {{"id": "root", "parent": null, "prob": "1", "prices": ["1","1"], "costs": {c}}},
            {{"id": "up", "parent": "root", "prob": "1/2", "prices": ["1","2"], "costs": {c}}},
            {{"id": "down", "parent": "root", "prob": "1/2", "prices": ["1","1/2"], "costs": {c}}}
        ],
        "claim": [{{"node": "up", "payoff": ["1","0"]}}, {{"node": "down", "payoff": ["0","0"]}}]}}"#
    );
    let (tree, claim) = qhedge::market::load_market(&text).unwrap();
    Instance { tree, claim: claim.unwrap() }
}

pub fn v(xs: &[(i64, i64)]) -> Vec<Rat> {
    xs.iter().map(|&(n, d)| rat(n, d)).collect()
}
