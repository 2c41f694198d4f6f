//! Transfer and solvency cones of a cost matrix.
//!
//! Cones are kept as generator lists. Membership is an LP feasibility
//! question (`x = sum a_k g_k`, `a >= 0`); dual membership is a finite check
//! against the generators.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense, VarId};
use crate::market::CostMatrix;
use crate::rat::{dot, Rat};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorCone {
    pub dim: usize,
    pub generators: Vec<Vec<Rat>>,
}

fn unit(d: usize, i: usize) -> Vec<Rat> {
    let mut e = vec![Rat::zero(); d];
    e[i] = Rat::one();
    e
}

/// Generator `(1 + l_ij) e_i - e_j`: the position consumed by moving one unit
/// into account `j` out of account `i`.
pub fn transfer_generator(costs: &CostMatrix, i: usize, j: usize) -> Vec<Rat> {
    let mut g = vec![Rat::zero(); costs.dim()];
    g[i] = Rat::one() + costs.get(i, j);
    g[j] = -Rat::one();
    g
}

/// The ordered pairs `(i, j)`, `i != j`, in the order used for transfer generators.
pub fn transfer_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// Positions that can be converted into zero by a non-negative transfer.
pub fn transfer_cone(costs: &CostMatrix) -> GeneratorCone {
    let d = costs.dim();
    GeneratorCone {
        dim: d,
        generators: transfer_pairs(d).map(|(i, j)| transfer_generator(costs, i, j)).collect(),
    }
}

/// Solvency region: the transfer cone plus the non-negative orthant.
pub fn solvency_cone(costs: &CostMatrix) -> GeneratorCone {
    let d = costs.dim();
    let mut cone = transfer_cone(costs);
    cone.generators.extend((0..d).map(|i| unit(d, i)));
    cone
}

impl GeneratorCone {
    /// Adds `x = sum a_k g_k` to `lp` as equality rows over fresh non-negative
    /// multipliers, where `x` is given row-wise as linear terms plus a constant
    /// moved to the right-hand side. Returns the multiplier variables.
    pub(crate) fn add_membership_rows(
        &self,
        lp: &mut LpProblem,
        lhs: Vec<Vec<(VarId, Rat)>>,
        rhs: Vec<Rat>,
    ) -> Vec<VarId> {
        let mult: Vec<VarId> = self.generators.iter().map(|_| lp.add_nonneg()).collect();
        for (i, (mut row, b)) in lhs.into_iter().zip(rhs).enumerate() {
            for (k, g) in self.generators.iter().enumerate() {
                if !g[i].is_zero() {
                    row.push((mult[k], -&g[i]));
                }
            }
            lp.add_constraint(row, Relation::Eq, b);
        }
        mult
    }

    pub fn contains(&self, x: &[Rat]) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        if x.iter().all(Rat::is_zero) {
            return Ok(true);
        }
        let mut lp = LpProblem::new(Sense::Minimize);
        self.add_membership_rows(&mut lp, vec![Vec::new(); self.dim], x.iter().map(|v| -v).collect());
        Ok(solve_lp(&lp)?.status == LpStatus::Optimal)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

pub fn cone_contains(cone: &GeneratorCone, x: &[Rat]) -> Result<bool> {
    cone.contains(x)
}

/// `x ⪰ y` in the solvency ordering of `costs`.
pub fn dominates(x: &[Rat], y: &[Rat], costs: &CostMatrix) -> Result<bool> {
    check_dim(costs.dim(), x.len())?;
    check_dim(costs.dim(), y.len())?;
    let diff: Vec<Rat> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    solvency_cone(costs).contains(&diff)
}

/// Efficient friction: the solvency cone contains no line.
///
/// Decided by `2d` box-bounded LPs maximizing `±x_i` over `x ∈ K ∩ -K`.
pub fn check_ef(costs: &CostMatrix) -> Result<bool> {
    let d = costs.dim();
    let k = solvency_cone(costs);
    for i in 0..d {
        for sign in [Rat::one(), -Rat::one()] {
            let mut lp = LpProblem::new(Sense::Maximize);
            let x: Vec<VarId> = (0..d)
                .map(|_| lp.add_var(Some(-Rat::one()), Some(Rat::one())))
                .collect();
            let pos: Vec<Vec<(VarId, Rat)>> = x.iter().map(|&v| vec![(v, Rat::one())]).collect();
            let neg: Vec<Vec<(VarId, Rat)>> = x.iter().map(|&v| vec![(v, -Rat::one())]).collect();
            k.add_membership_rows(&mut lp, pos, vec![Rat::zero(); d]);
            k.add_membership_rows(&mut lp, neg, vec![Rat::zero(); d]);
            lp.set_objective(vec![(x[i], sign.clone())]);
            let sol = solve_lp(&lp)?;
            match sol.value {
                Some(v) if v.is_zero() => {}
                Some(_) => return Ok(false),
                None => return Err(Error::Internal("EF probe LP not optimal".into())),
            }
        }
    }
    Ok(true)
}

/// `w ∈ K*`: `w·g >= 0` for every solvency generator.
pub fn dual_cone_contains(costs: &CostMatrix, w: &[Rat]) -> Result<bool> {
    check_dim(costs.dim(), w.len())?;
    Ok(solvency_cone(costs).generators.iter().all(|g| !dot(w, g).is_negative()))
}

/// Largest `c` with `y - c e_asset` in the transfer cone: the amount of asset
/// `asset` obtained by converting the whole position `y` into it.
pub fn liquidation_value(y: &[Rat], costs: &CostMatrix, asset: usize) -> Result<Rat> {
    let d = costs.dim();
    check_dim(d, y.len())?;
    if asset >= d {
        return Err(Error::Precondition(format!("asset index {asset} out of range 0..{d}")));
    }
    let mut lp = LpProblem::new(Sense::Maximize);
    let c = lp.add_free();
    let lhs: Vec<Vec<(VarId, Rat)>> =
        (0..d).map(|i| if i == asset { vec![(c, -Rat::one())] } else { Vec::new() }).collect();
    let rhs: Vec<Rat> = y.iter().map(|v| -v).collect();
    transfer_cone(costs).add_membership_rows(&mut lp, lhs, rhs);
    lp.set_objective(vec![(c, Rat::one())]);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.get(c).cloned().expect("optimal assignment")),
        LpStatus::Infeasible => Err(Error::NotLiquidatable),
        LpStatus::Unbounded => Err(Error::Model("liquidation value unbounded (friction admits a free lunch)".into())),
    }
}
