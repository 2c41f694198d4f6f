//! Success function, shortfall and effectiveness of an admissible strategy.
//!
//! On a leaf where terminal wealth dominates the claim the success value is
//! one. Elsewhere it is the largest `c` such that a terminal transfer turns
//! the wealth into exactly `c·H`, i.e. the largest `c` with `V − c·H` in the
//! transfer cone. That maximum is a single LP per leaf.

use std::io::Write;

use rayon::prelude::*;

use crate::cone::{self, check_dim, transfer_cone, transfer_pairs};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Sense, VarId};
use crate::market::{Claim, CostMatrix, ScenarioTree};
use crate::rat::Rat;
use crate::wealth::{first_insolvent_leaf, TransferMatrix, WealthPath};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafSuccess {
    pub leaf: usize,
    pub hedged: bool,
    pub phi: Rat,
    /// Optimal proportional transfer; present exactly on unhedged leaves.
    pub witness: Option<TransferMatrix>,
}

/// Success values for every leaf, in [`ScenarioTree::leaves`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessProfile {
    pub leaves: Vec<LeafSuccess>,
}

impl SuccessProfile {
    pub fn phi(&self) -> Vec<Rat> {
        self.leaves.iter().map(|l| l.phi.clone()).collect()
    }
}

/// Best proportional transfer of `v` towards `h`: returns `ĉ = max{c : v − c·h ∈ M}`
/// together with the transfer realizing it.
pub fn optimal_proportional_transfer(v: &[Rat], h: &[Rat], costs: &CostMatrix) -> Result<(Rat, TransferMatrix)> {
    let d = costs.dim();
    check_dim(d, v.len())?;
    check_dim(d, h.len())?;
    if h.iter().any(|x| !x.is_positive()) {
        return Err(Error::ClaimNotStrictlyPositive { leaf: None });
    }
    max_transfer_ratio(v, h, costs)
}

/// The LP behind [`optimal_proportional_transfer`], without the positivity
/// guard on `h`.
pub(crate) fn max_transfer_ratio(v: &[Rat], h: &[Rat], costs: &CostMatrix) -> Result<(Rat, TransferMatrix)> {
    let d = costs.dim();
    let mut lp = LpProblem::new(Sense::Maximize);
    let c = lp.add_free();
    let lhs: Vec<Vec<(VarId, Rat)>> = h.iter().map(|hi| vec![(c, -hi)]).collect();
    let rhs: Vec<Rat> = v.iter().map(|x| -x).collect();
    let mult = transfer_cone(costs).add_membership_rows(&mut lp, lhs, rhs);
    lp.set_objective(vec![(c, Rat::one())]);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::NoProportionalTransfer),
        LpStatus::Unbounded => return Err(Error::Internal("proportional transfer ratio unbounded".into())),
    }
    let mut transfer = TransferMatrix::zero(d);
    for ((i, j), m) in transfer_pairs(d).zip(&mult) {
        let x = sol.get(*m).unwrap();
        if !x.is_zero() {
            transfer.set(i, j, x.clone());
        }
    }
    Ok((sol.get(c).unwrap().clone(), transfer))
}

/// Success value at a single leaf; `v` must be solvent.
pub fn leaf_success(v: &[Rat], h: &[Rat], costs: &CostMatrix) -> Result<(bool, Rat, Option<TransferMatrix>)> {
    if cone::dominates(v, h, costs)? {
        return Ok((true, Rat::one(), None));
    }
    let (c, l) = optimal_proportional_transfer(v, h, costs)?;
    Ok((false, c, Some(l)))
}

pub fn success_function(tree: &ScenarioTree, path: &WealthPath, claim: &Claim) -> Result<SuccessProfile> {
    if let Some(l) = first_insolvent_leaf(tree, path)? {
        return Err(Error::Inadmissible { leaf: tree.node(l).id.clone() });
    }
    let leaves = tree
        .leaves()
        .par_iter()
        .map(|&l| {
            let h = claim
                .payoff(l)
                .ok_or_else(|| Error::Precondition(format!("claim undefined on leaf {}", tree.node(l).id)))?;
            let (hedged, phi, witness) = leaf_success(path.at(l), h, &tree.node(l).costs).map_err(|e| match e {
                Error::ClaimNotStrictlyPositive { .. } => {
                    Error::ClaimNotStrictlyPositive { leaf: Some(tree.node(l).id.clone()) }
                }
                e => e,
            })?;
            Ok(LeafSuccess { leaf: l, hedged, phi, witness })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuccessProfile { leaves })
}

/// `1 − φ` per leaf.
pub fn shortfall(profile: &SuccessProfile) -> Vec<Rat> {
    profile.leaves.iter().map(|l| Rat::one() - &l.phi).collect()
}

/// `E[φ]` under the tree's path probabilities.
pub fn effectiveness(tree: &ScenarioTree, profile: &SuccessProfile) -> Rat {
    profile.leaves.iter().map(|l| tree.path_prob(l.leaf) * &l.phi).sum()
}

/// Writes `leaf_id,probability,hedged,phi,shortfall` rows.
pub fn write_profile_csv<W: Write>(tree: &ScenarioTree, profile: &SuccessProfile, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["leaf_id", "probability", "hedged", "phi", "shortfall"]).map_err(io)?;
    for l in &profile.leaves {
        w.write_record([
            tree.node(l.leaf).id.clone(),
            tree.path_prob(l.leaf).to_string(),
            l.hedged.to_string(),
            l.phi.to_string(),
            (Rat::one() - &l.phi).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;
    use crate::testing::{binomial, vecr};
    use crate::wealth::{run_strategy, Strategy};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
    use proptest::strategy::Strategy as _;

    fn tenth() -> CostMatrix {
        CostMatrix::uniform(2, rat(1, 10))
    }

    #[test]
    fn proportional_transfer_examples() {
        let ones = vecr(&[(1, 1), (1, 1)]);
        let (c, l) = optimal_proportional_transfer(&vecr(&[(1, 1), (0, 1)]), &ones, &tenth()).unwrap();
        assert_eq!(c, rat(10, 21));
        // Applying the witness lands exactly on c·H.
        let db = crate::wealth::transfer_effect(&l, &tenth()).unwrap();
        assert_eq!(vec![Rat::one() + &db[0], db[1].clone()], vec![c.clone(), c]);

        let (c, _) = optimal_proportional_transfer(&vecr(&[(1, 2), (1, 2)]), &ones, &tenth()).unwrap();
        assert_eq!(c, rat(1, 2));
        let (c, _) = optimal_proportional_transfer(&vecr(&[(1, 1), (0, 1)]), &ones, &CostMatrix::zero(2)).unwrap();
        assert_eq!(c, rat(1, 2));
    }

    #[test]
    fn non_positive_claim_rejected() {
        let r = optimal_proportional_transfer(&vecr(&[(1, 1), (0, 1)]), &vecr(&[(1, 1), (0, 1)]), &tenth());
        assert!(matches!(r, Err(Error::ClaimNotStrictlyPositive { leaf: None })));
    }

    #[test]
    fn leaf_examples() {
        let (hedged, phi, w) = leaf_success(&vecr(&[(2, 1), (2, 1)]), &vecr(&[(1, 1), (1, 1)]), &tenth()).unwrap();
        assert!(hedged && phi == Rat::one() && w.is_none());
        let (hedged, phi, w) = leaf_success(&vecr(&[(1, 1), (0, 1)]), &vecr(&[(1, 1), (1, 1)]), &tenth()).unwrap();
        assert!(!hedged && phi == rat(10, 21) && w.is_some());
        let (hedged, phi, _) = leaf_success(&vecr(&[(1, 1), (-9, 10)]), &vecr(&[(0, 1), (0, 1)]), &tenth()).unwrap();
        assert!(hedged && phi == Rat::one());
    }

    #[test]
    fn profile_on_binomial() {
        let (tree, _) = binomial(rat(1, 10));
        let ones = vecr(&[(1, 1), (1, 1)]);
        let claim = Claim { payoffs: tree.leaves().iter().map(|&l| (l, ones.clone())).collect() };
        // Holding (1, 0): both leaves unhedged with ĉ = 10/21.
        let path = run_strategy(&tree, &vecr(&[(1, 1), (0, 1)]), &Strategy::zero(&tree)).unwrap();
        let profile = success_function(&tree, &path, &claim).unwrap();
        assert_eq!(profile.phi(), vec![rat(10, 21), rat(10, 21)]);
        assert_eq!(shortfall(&profile), vec![rat(11, 21), rat(11, 21)]);
        assert_eq!(effectiveness(&tree, &profile), rat(10, 21));

        let mut csv = Vec::new();
        write_profile_csv(&tree, &profile, &mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "leaf_id,probability,hedged,phi,shortfall\nup,1/2,false,10/21,11/21\ndown,1/2,false,10/21,11/21\n"
        );
    }

    #[test]
    fn inadmissible_and_zero_payoff_errors() {
        let (tree, claim) = binomial(rat(1, 10));
        let path = run_strategy(&tree, &vecr(&[(-1, 1), (0, 1)]), &Strategy::zero(&tree)).unwrap();
        assert!(matches!(success_function(&tree, &path, &claim), Err(Error::Inadmissible { .. })));
        // Claim (1,0) has a zero component; unhedged up leaf must be rejected.
        let path = run_strategy(&tree, &vecr(&[(0, 1), (1, 10)]), &Strategy::zero(&tree)).unwrap();
        match success_function(&tree, &path, &claim) {
            Err(Error::ClaimNotStrictlyPositive { leaf }) => assert_eq!(leaf.as_deref(), Some("up")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn effectiveness_examples() {
        let (tree, _) = binomial(Rat::zero());
        let mk = |phis: [Rat; 2]| SuccessProfile {
            leaves: tree
                .leaves()
                .iter()
                .zip(phis)
                .map(|(&leaf, phi)| LeafSuccess { leaf, hedged: phi == Rat::one(), phi, witness: None })
                .collect(),
        };
        assert_eq!(effectiveness(&tree, &mk([Rat::one(), Rat::one()])), Rat::one());
        assert_eq!(effectiveness(&tree, &mk([rat(1, 2), Rat::one()])), rat(3, 4));
        assert_eq!(effectiveness(&tree, &mk([Rat::zero(), Rat::zero()])), Rat::zero());
        assert_eq!(shortfall(&mk([Rat::one(), rat(1, 2)])), vec![Rat::zero(), rat(1, 2)]);
    }

    fn costs_strategy(d: usize) -> impl proptest::strategy::Strategy<Value = CostMatrix> {
        proptest::collection::vec(1i64..=5, d * d).prop_map(move |xs| {
            let mut m = CostMatrix::zero(d);
            for (i, j) in transfer_pairs(d) {
                m.set(i, j, rat(xs[i * d + j], 10));
            }
            m
        })
    }

    fn positive_vec(d: usize) -> impl proptest::strategy::Strategy<Value = Vec<Rat>> {
        proptest::collection::vec((1i64..=9, 1i64..=4), d).prop_map(|xs| xs.into_iter().map(|(n, q)| rat(n, q)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn scaling_anchor(
            (m, h) in (2usize..=3).prop_flat_map(|d| (costs_strategy(d), positive_vec(d))),
            k in 0i64..16,
        ) {
            let c = rat(k, 16);
            let v: Vec<Rat> = h.iter().map(|x| x * &c).collect();
            let (got, _) = optimal_proportional_transfer(&v, &h, &m).unwrap();
            prop_assert_eq!(got, c);
        }

        #[test]
        fn frictionless_reduction(
            v in proptest::collection::vec((0i64..=9, 1i64..=4), 3),
            h in positive_vec(3),
        ) {
            let v: Vec<Rat> = v.into_iter().map(|(n, q)| rat(n, q)).collect();
            let (c, _) = optimal_proportional_transfer(&v, &h, &CostMatrix::zero(3)).unwrap();
            prop_assert_eq!(c, v.iter().sum::<Rat>() / h.iter().sum::<Rat>());
        }

        #[test]
        fn monotone_in_wealth(
            (m, h, v, extra) in (2usize..=3).prop_flat_map(|d| (costs_strategy(d), positive_vec(d), positive_vec(d), positive_vec(d))),
        ) {
            // v' = v + k with k in K_T, so v' ⪰ v.
            let v2: Vec<Rat> = v.iter().zip(&extra).map(|(a, b)| a + b).collect();
            let (c1, _) = optimal_proportional_transfer(&v, &h, &m).unwrap();
            let (c2, _) = optimal_proportional_transfer(&v2, &h, &m).unwrap();
            prop_assert!(c2 >= c1);
            let (hedged, phi, _) = leaf_success(&v, &h, &m).unwrap();
            prop_assert_eq!(hedged, phi == Rat::one());
            prop_assert!(!phi.is_negative() && phi <= Rat::one());
        }
    }
}
