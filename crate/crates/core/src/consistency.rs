//! Consistent price systems and the dual description of hedgeable endowments.
//!
//! A price system `Z` is a martingale on the tree whose price-normalized
//! version `Ẑ = Z / S` lies in the dual of the solvency cone at every node.
//! A strictly consistent one (interior of the dual cones) certifies strict
//! no-arbitrage under efficient friction. Over all price systems,
//! `v ∈ Γ(H)` iff `Ẑ_0·v ≥ E[Ẑ_T·H]`.

use std::io::Write;

use crate::cone::{check_dim, check_ef, dual_cone_contains, solvency_cone};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense, VarId};
use crate::market::{Claim, ScenarioTree};
use crate::rat::Rat;

/// `Z` at every node, indexed like [`ScenarioTree::nodes`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceSystem {
    pub values: Vec<Vec<Rat>>,
}

impl PriceSystem {
    /// `Ẑ^i = Z^i / S^i` at node `k`.
    pub fn normalized(&self, tree: &ScenarioTree, k: usize) -> Vec<Rat> {
        self.values[k].iter().zip(&tree.node(k).prices).map(|(z, s)| z / s).collect()
    }
}

/// Martingale identity at every inner node and dual-cone membership at every node.
pub fn is_price_system(tree: &ScenarioTree, z: &PriceSystem) -> Result<bool> {
    check_dim(tree.len(), z.values.len())?;
    for (k, node) in tree.nodes().iter().enumerate() {
        check_dim(tree.dimension(), z.values[k].len())?;
        if !node.is_leaf() {
            for i in 0..tree.dimension() {
                let avg: Rat = node.children.iter().map(|&c| &tree.node(c).prob * &z.values[c][i]).sum();
                if avg != z.values[k][i] {
                    return Ok(false);
                }
            }
        }
        if !dual_cone_contains(&node.costs, &z.normalized(tree, k))? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `Ẑ·g > 0` for every solvency generator at every node.
pub fn is_strict_price_system(tree: &ScenarioTree, z: &PriceSystem) -> Result<bool> {
    if !is_price_system(tree, z)? {
        return Ok(false);
    }
    Ok(tree.nodes().iter().enumerate().all(|(k, node)| {
        let zh = z.normalized(tree, k);
        solvency_cone(&node.costs)
            .generators
            .iter()
            .all(|g| crate::rat::dot(&zh, g).is_positive())
    }))
}

/// Adds `Z` variables, the martingale rows and `Ẑ_k·g ≥ floor` for every
/// solvency generator. Returns the variables, `[node][asset]`.
fn price_system_lp(tree: &ScenarioTree, lp: &mut LpProblem, floor: &Rat) -> Vec<Vec<VarId>> {
    let d = tree.dimension();
    let z: Vec<Vec<VarId>> = (0..tree.len()).map(|_| (0..d).map(|_| lp.add_nonneg()).collect()).collect();
    for (k, node) in tree.nodes().iter().enumerate() {
        if !node.is_leaf() {
            for i in 0..d {
                let mut row = vec![(z[k][i], Rat::one())];
                row.extend(node.children.iter().map(|&c| (z[c][i], -&tree.node(c).prob)));
                lp.add_constraint(row, Relation::Eq, Rat::zero());
            }
        }
        for g in solvency_cone(&node.costs).generators {
            let row: Vec<(VarId, Rat)> = (0..d)
                .filter(|&i| !g[i].is_zero())
                .map(|i| (z[k][i], &g[i] / &node.prices[i]))
                .collect();
            lp.add_constraint(row, Relation::Ge, floor.clone());
        }
    }
    z
}

fn extract(sol: &crate::lp::LpSolution, z: &[Vec<VarId>]) -> PriceSystem {
    PriceSystem { values: z.iter().map(|row| row.iter().map(|&v| sol.get(v).unwrap().clone()).collect()).collect() }
}

/// A strictly consistent price system, if one exists. Requires efficient
/// friction at every node.
pub fn find_strict_cps(tree: &ScenarioTree) -> Result<Option<PriceSystem>> {
    for node in tree.nodes() {
        if !check_ef(&node.costs)? {
            return Err(Error::EfViolated { node: node.id.clone() });
        }
    }
    let mut lp = LpProblem::new(Sense::Minimize);
    // Strict interior via homogeneity: Ẑ·g ≥ 1 instead of > 0.
    let z = price_system_lp(tree, &mut lp, &Rat::one());
    let sol = solve_lp(&lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => Some(extract(&sol, &z)),
        _ => None,
    })
}

/// `min (Ẑ_0·v − E[Ẑ_T·H])` over price systems normalized by `Σ_i Ẑ_0^i = 1`,
/// with the minimizing system. `v ∈ Γ(H)` iff the gap is non-negative.
pub fn dual_hedge_gap_with_system(tree: &ScenarioTree, claim: &Claim, v: &[Rat]) -> Result<(Rat, PriceSystem)> {
    let d = tree.dimension();
    check_dim(d, v.len())?;
    let mut lp = LpProblem::new(Sense::Minimize);
    let z = price_system_lp(tree, &mut lp, &Rat::zero());
    let root = tree.root_prices();
    lp.add_constraint((0..d).map(|i| (z[0][i], root[i].recip())).collect(), Relation::Eq, Rat::one());
    let mut objective: Vec<(VarId, Rat)> = (0..d).map(|i| (z[0][i], &v[i] / &root[i])).collect();
    for &l in tree.leaves() {
        let h = crate::hedge::payoff(tree, claim, l)?;
        let node = tree.node(l);
        for i in 0..d {
            if !h[i].is_zero() {
                objective.push((z[l][i], -(tree.path_prob(l) * &h[i] / &node.prices[i])));
            }
        }
    }
    lp.set_objective(objective);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.value.clone().unwrap(), extract(&sol, &z))),
        LpStatus::Infeasible => Err(Error::Model("no non-zero consistent price system exists".into())),
        LpStatus::Unbounded => Err(Error::Internal("dual hedging gap unbounded".into())),
    }
}

pub fn dual_hedge_gap(tree: &ScenarioTree, claim: &Claim, v: &[Rat]) -> Result<Rat> {
    dual_hedge_gap_with_system(tree, claim, v).map(|(g, _)| g)
}

/// Writes `node_id,Z_1,...,Z_d` rows.
pub fn write_price_system_csv<W: Write>(tree: &ScenarioTree, z: &PriceSystem, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    let mut header = vec!["node_id".to_string()];
    header.extend((1..=tree.dimension()).map(|i| format!("Z_{i}")));
    w.write_record(&header).map_err(io)?;
    for (node, row) in tree.nodes().iter().zip(&z.values) {
        let mut rec = vec![node.id.clone()];
        rec.extend(row.iter().map(Rat::to_string));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::load_market;
    use crate::rat::rat;
    use crate::testing::{binomial, vecr};

    #[test]
    fn binomial_with_friction_is_strictly_consistent() {
        let (tree, _) = binomial(rat(1, 10));
        let z = find_strict_cps(&tree).unwrap().expect("a strict CPS exists");
        assert!(is_strict_price_system(&tree, &z).unwrap());

        let hand = PriceSystem {
            values: vec![
                vecr(&[(11, 10), (1, 1)]),
                vecr(&[(1, 1), (2, 1)]),
                vecr(&[(6, 5), (0, 1)]),
            ],
        };
        assert!(!is_price_system(&tree, &hand).unwrap());
        let hand = PriceSystem {
            values: vec![
                vecr(&[(11, 10), (13, 11)]),
                vecr(&[(1, 1), (20, 11)]),
                vecr(&[(6, 5), (6, 11)]),
            ],
        };
        assert!(is_price_system(&tree, &hand).unwrap());
        assert!(!is_strict_price_system(&tree, &hand).unwrap());
    }

    #[test]
    fn deterministic_rise_has_no_cps() {
        let c = r#"[["0","1/10"],["1/10","0"]]"#;
        let text = format!(
            r#"{{"dimension": 2, "horizon": 1, "nodes": [
                {{"id": "r", "parent": null, "prob": "1", "prices": ["1","1"], "costs": {c}}},
                {{"id": "u", "parent": "r", "prob": "1", "prices": ["1","2"], "costs": {c}}}]}}"#
        );
        let (tree, _) = load_market(&text).unwrap();
        assert!(find_strict_cps(&tree).unwrap().is_none());
    }

    #[test]
    fn single_node_tree() {
        let text = r#"{"dimension": 2, "horizon": 0, "nodes": [
            {"id": "r", "parent": null, "prob": "1", "prices": ["1","3"], "costs": [["0","1/5"],["1/4","0"]]}]}"#;
        let (tree, _) = load_market(text).unwrap();
        assert!(find_strict_cps(&tree).unwrap().is_some());
    }

    #[test]
    fn ef_required() {
        let (tree, _) = binomial(Rat::zero());
        assert!(matches!(find_strict_cps(&tree), Err(Error::EfViolated { node }) if node == "root"));
    }

    #[test]
    fn dual_gap_examples() {
        let (tree, claim) = binomial(Rat::zero());
        assert_eq!(dual_hedge_gap(&tree, &claim, &vecr(&[(1, 3), (0, 1)])).unwrap(), Rat::zero());
        assert_eq!(dual_hedge_gap(&tree, &claim, &vecr(&[(1, 4), (0, 1)])).unwrap(), rat(-1, 24));
        let zero = Claim::zero(&tree);
        assert!(!dual_hedge_gap(&tree, &zero, &vecr(&[(1, 5), (2, 1)])).unwrap().is_negative());
    }

    #[test]
    fn dual_gap_is_homogeneous() {
        let (tree, claim) = binomial(rat(1, 10));
        let v = vecr(&[(1, 5), (1, 7)]);
        let g = dual_hedge_gap(&tree, &claim, &v).unwrap();
        let k = rat(5, 2);
        let v2: Vec<Rat> = v.iter().map(|x| x * &k).collect();
        let claim2 = Claim { payoffs: claim.payoffs.iter().map(|(&l, h)| (l, h.iter().map(|x| x * &k).collect())).collect() };
        assert_eq!(dual_hedge_gap(&tree, &claim2, &v2).unwrap(), g * k);
    }

    #[test]
    fn csv_export() {
        let (tree, _) = binomial(rat(1, 10));
        let z = find_strict_cps(&tree).unwrap().unwrap();
        let mut out = Vec::new();
        write_price_system_csv(&tree, &z, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("node_id,Z_1,Z_2"));
        for (line, row) in lines.zip(&z.values) {
            let cells: Vec<&str> = line.split(',').collect();
            let parsed: Vec<Rat> = cells[1..].iter().map(|c| c.parse().unwrap()).collect();
            assert_eq!(&parsed, row);
        }
    }
}
