//! Shared fixtures for unit tests.

use crate::market::{load_market, Claim, ScenarioTree};
use crate::rat::Rat;

/// Two assets, `S¹ ≡ 1`, `S²: 1 → {2, 1/2}` with probability 1/2 each, the
/// same cost `lambda` on both pairs everywhere, and the claim `(1,0)` on the
/// up leaf, `(0,0)` on the down leaf.
pub(crate) fn binomial(lambda: Rat) -> (ScenarioTree, Claim) {
    let c = format!(r#"[["0","{lambda}"],["{lambda}","0"]]"#);
    let text = format!(
        r#"{{"dimension": 2, "horizon": 1, "nodes": [
            {{"id": "root", "parent": null, "prob": "1", "prices": ["1","1"], "costs": {c}}},
            {{"id": "up", "parent": "root", "prob": "1/2", "prices": ["1","2"], "costs": {c}}},
            {{"id": "down", "parent": "root", "prob": "1/2", "prices": ["1","1/2"], "costs": {c}}}
        ],
        "claim": [{{"node": "up", "payoff": ["1","0"]}}, {{"node": "down", "payoff": ["0","0"]}}]}}"#
    );
    let (tree, claim) = load_market(&text).expect("fixture parses");
    (tree, claim.expect("fixture has a claim"))
}

pub(crate) fn vecr(xs: &[(i64, i64)]) -> Vec<Rat> {
    xs.iter().map(|&(n, d)| Rat::new(n, d)).collect()
}
