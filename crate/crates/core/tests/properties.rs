mod common;

use common::*;
use qhedge::consistency::dual_hedge_gap;
use qhedge::frictionless::{emm_price, scalarize, scalarize_claim};
use qhedge::hedge::{hedging_feasible, min_hedging_capital};
use qhedge::quantile::{gamma_eps_member, maximize_effectiveness, min_capital_eps};
use qhedge::rat::rat;
use qhedge::shortfall::{check_loss, minimize_shortfall_risk, LossFunction};
use qhedge::success::{effectiveness, success_function};
use qhedge::wealth::{run_strategy, sample_long_only_strategy};
use qhedge::Rat;
use rand::Rng;

#[test]
fn quantile_optimum_beats_sampled_strategies() {
    let mut rng = rng(101);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let v0 = budget_below_price(&mut rng, &inst);
        let best = maximize_effectiveness(&inst.tree, &inst.claim, &v0).unwrap();
        for _ in 0..5 {
            let s = sample_long_only_strategy(&inst.tree, &v0, 8, &mut rng).unwrap();
            let path = run_strategy(&inst.tree, &v0, &s).unwrap();
            let profile = success_function(&inst.tree, &path, &inst.claim).unwrap();
            assert!(effectiveness(&inst.tree, &profile) <= best.value);
        }
    }
}

#[test]
fn gamma_eps_agrees_with_capital_along_rays() {
    let mut rng = rng(102);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let d = inst.tree.dimension();
        let w: Vec<Rat> = (0..d).map(|i| if i == 0 { Rat::one() } else { rat(rng.gen_range(0..=2), 2) }).collect();
        let eps = rat(rng.gen_range(0..=4), 4);
        let capital = min_capital_eps(&inst.tree, &inst.claim, &w, &eps).unwrap();
        for scale in [capital.clone(), &capital * rat(7, 8), &capital + rat(1, 16)] {
            let v: Vec<Rat> = w.iter().map(|x| x * &scale).collect();
            assert_eq!(gamma_eps_member(&inst.tree, &inst.claim, &v, &eps).unwrap(), capital <= scale);
        }
    }
}

#[test]
fn gamma_zero_is_the_hedging_set() {
    let mut rng = rng(103);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let price = min_hedging_capital(&inst.tree, &inst.claim, &unit(inst.tree.dimension(), 0)).unwrap();
        let mut vs = vec![random_vector(&mut rng, inst.tree.dimension(), 0, 2)];
        vs.push(unit(inst.tree.dimension(), 0).iter().map(|e| e * &price).collect());
        for v in vs {
            let feasible = hedging_feasible(&inst.tree, &inst.claim, &v).unwrap().0;
            assert_eq!(gamma_eps_member(&inst.tree, &inst.claim, &v, &Rat::zero()).unwrap(), feasible);
        }
    }
}

#[test]
fn hedged_endowments_carry_no_risk() {
    let mut rng = rng(104);
    let u = check_loss(vec![(rat(0, 1), rat(0, 1)), (rat(1, 3), rat(1, 6)), (rat(1, 1), rat(2, 1))]).unwrap();
    for _ in 0..15 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let w = unit(inst.tree.dimension(), 0);
        let price = min_hedging_capital(&inst.tree, &inst.claim, &w).unwrap();
        let v0: Vec<Rat> = w.iter().map(|e| e * &price).collect();
        let best = minimize_shortfall_risk(&inst.tree, &inst.claim, &v0, &u).unwrap();
        assert_eq!(best.value, Rat::zero());
    }
}

#[test]
fn larger_loss_larger_risk() {
    let mut rng = rng(105);
    let small = check_loss(vec![(rat(0, 1), rat(0, 1)), (rat(1, 2), rat(1, 8)), (rat(1, 1), rat(1, 1))]).unwrap();
    let large = check_loss(vec![(rat(0, 1), rat(0, 1)), (rat(1, 2), rat(1, 4)), (rat(1, 1), rat(3, 2))]).unwrap();
    for _ in 0..15 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let v0 = budget_below_price(&mut rng, &inst);
        let a = minimize_shortfall_risk(&inst.tree, &inst.claim, &v0, &small).unwrap().value;
        let b = minimize_shortfall_risk(&inst.tree, &inst.claim, &v0, &large).unwrap().value;
        assert!(a <= b);
    }
}

#[test]
fn shortfall_witness_reproduces_phi_where_loss_increases() {
    let mut rng = rng(106);
    let flat_start = rat(1, 4);
    let u = check_loss(vec![(rat(0, 1), rat(0, 1)), (flat_start.clone(), rat(0, 1)), (rat(1, 1), rat(1, 1))]).unwrap();
    let strict = check_loss(vec![(rat(0, 1), rat(0, 1)), (rat(1, 2), rat(1, 4)), (rat(1, 1), rat(1, 1))]).unwrap();
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let v0 = budget_below_price(&mut rng, &inst);

        let best = minimize_shortfall_risk(&inst.tree, &inst.claim, &v0, &strict).unwrap();
        let path = run_strategy(&inst.tree, &v0, &best.strategy).unwrap();
        assert_eq!(success_function(&inst.tree, &path, &inst.claim).unwrap().phi(), best.phi);

        let best = minimize_shortfall_risk(&inst.tree, &inst.claim, &v0, &u).unwrap();
        let path = run_strategy(&inst.tree, &v0, &best.strategy).unwrap();
        let got = success_function(&inst.tree, &path, &inst.claim).unwrap().phi();
        for (g, f) in got.iter().zip(&best.phi) {
            assert!(g >= f);
            if Rat::one() - f > flat_start {
                assert_eq!(g, f);
            }
        }
        let risk: Rat =
            inst.tree.leaves().iter().zip(&got).map(|(&l, g)| inst.tree.path_prob(l) * u.eval(&(Rat::one() - g))).sum();
        assert_eq!(risk, best.value);
    }
}

#[test]
fn identity_loss_is_the_quantile_problem() {
    let mut rng = rng(107);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let v0 = budget_below_price(&mut rng, &inst);
        let risk = minimize_shortfall_risk(&inst.tree, &inst.claim, &v0, &LossFunction::identity()).unwrap();
        let value = maximize_effectiveness(&inst.tree, &inst.claim, &v0).unwrap();
        assert_eq!(risk.value, Rat::one() - value.value);
    }
}

#[test]
fn dual_gap_is_positively_homogeneous() {
    let mut rng = rng(108);
    for _ in 0..10 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONAL);
        let v = random_vector(&mut rng, inst.tree.dimension(), 1, 2);
        let k = rat(rng.gen_range(1..=9), 4);
        let g = dual_hedge_gap(&inst.tree, &inst.claim, &v).unwrap();
        let v2: Vec<Rat> = v.iter().map(|x| x * &k).collect();
        let phi = vec![k.clone(); inst.tree.leaves().len()];
        let g2 = dual_hedge_gap(&inst.tree, &inst.claim.scaled(&inst.tree, &phi), &v2).unwrap();
        assert_eq!(g2, g * k);
    }
}

#[test]
fn frictionless_hedging_set_is_a_half_space() {
    let mut rng = rng(109);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, &Shape::FRICTIONLESS);
        let price = emm_price(&inst.tree, &scalarize_claim(&inst.tree, &inst.claim).unwrap()).unwrap();
        let d = inst.tree.dimension();
        let mut boundary = random_vector(&mut rng, d, 1, 1);
        let shift = &price - scalarize(&inst.tree, &boundary).unwrap();
        boundary[d - 1] += shift;
        for v in [random_vector(&mut rng, d, 1, 3), boundary.clone(), {
            let mut below = boundary;
            below[0] -= rat(1, 64);
            below
        }] {
            let inside = scalarize(&inst.tree, &v).unwrap() >= price;
            assert_eq!(hedging_feasible(&inst.tree, &inst.claim, &v).unwrap().0, inside);
        }
    }
}
