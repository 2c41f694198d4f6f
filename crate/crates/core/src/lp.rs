//! Exact two-phase primal simplex over [`Rat`].
//!
//! Problems are stated over bounded or free variables with `<=`, `=` and `>=`
//! rows. Internally everything is shifted to standard form
//! `min c'x, Ax = b, x >= 0, b >= 0` and solved on a dense tableau with
//! Bland's rule (lowest index enters, lowest basic index breaks ratio ties).
//! Pivots skip zero entries, which matters on the block-sparse tree LPs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::rat::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub lower: Option<Rat>,
    pub upper: Option<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, Rat)>,
    pub relation: Relation,
    pub rhs: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpProblem {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, Rat)>,
    pub sense: Sense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present iff optimal.
    pub value: Option<Rat>,
    /// Present iff optimal; indexed by [`VarId`].
    pub assignment: Option<Vec<Rat>>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self) -> Option<&Rat> {
        self.value.as_ref()
    }

    pub fn get(&self, v: VarId) -> Option<&Rat> {
        self.assignment.as_ref().map(|a| &a[v.0])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("constraint {constraint} references unknown variable {var}")]
    UnknownVariable { constraint: usize, var: usize },
    #[error("objective references unknown variable {0}")]
    UnknownObjectiveVariable(usize),
    #[error("variable {var} has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { var: usize, lower: Rat, upper: Rat },
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem { variables: Vec::new(), constraints: Vec::new(), objective: Vec::new(), sense }
    }

    pub fn add_var(&mut self, lower: Option<Rat>, upper: Option<Rat>) -> VarId {
        self.variables.push(Variable { lower, upper });
        VarId(self.variables.len() - 1)
    }

    /// A variable with lower bound zero and no upper bound.
    pub fn add_nonneg(&mut self) -> VarId {
        self.add_var(Some(Rat::zero()), None)
    }

    pub fn add_free(&mut self) -> VarId {
        self.add_var(None, None)
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(VarId, Rat)>, relation: Relation, rhs: Rat) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    pub fn set_objective(&mut self, coeffs: Vec<(VarId, Rat)>) {
        self.objective = coeffs;
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        for (i, v) in self.variables.iter().enumerate() {
            if let (Some(l), Some(u)) = (&v.lower, &v.upper) {
                if l > u {
                    return Err(LpError::InvertedBounds { var: i, lower: l.clone(), upper: u.clone() });
                }
            }
        }
        for (ci, c) in self.constraints.iter().enumerate() {
            if let Some((v, _)) = c.coeffs.iter().find(|(v, _)| v.0 >= n) {
                return Err(LpError::UnknownVariable { constraint: ci, var: v.0 });
            }
        }
        if let Some((v, _)) = self.objective.iter().find(|(v, _)| v.0 >= n) {
            return Err(LpError::UnknownObjectiveVariable(v.0));
        }
        Ok(())
    }

    /// Exact satisfaction check of every bound and constraint.
    pub fn is_satisfied_by(&self, x: &[Rat]) -> bool {
        if x.len() != self.variables.len() {
            return false;
        }
        let bounds_ok = self.variables.iter().zip(x).all(|(v, xi)| {
            v.lower.as_ref().map_or(true, |l| xi >= l) && v.upper.as_ref().map_or(true, |u| xi <= u)
        });
        bounds_ok
            && self.constraints.iter().all(|c| {
                let lhs: Rat = c.coeffs.iter().map(|(v, a)| a * &x[v.0]).sum();
                match c.relation {
                    Relation::Le => lhs <= c.rhs,
                    Relation::Eq => lhs == c.rhs,
                    Relation::Ge => lhs >= c.rhs,
                }
            })
    }

    pub fn objective_value(&self, x: &[Rat]) -> Rat {
        self.objective.iter().map(|(v, a)| a * &x[v.0]).sum()
    }
}

/// How an original variable maps onto non-negative standard-form columns.
#[derive(Debug, Clone)]
enum Column {
    /// x = offset + col
    Shifted { col: usize, offset: Rat },
    /// x = offset - col
    Mirrored { col: usize, offset: Rat },
    /// x = plus - minus
    Split { plus: usize, minus: usize },
}

struct StandardForm {
    rows: Vec<BTreeMap<usize, Rat>>,
    rhs: Vec<Rat>,
    /// Minimization costs over structural + slack columns.
    cost: Vec<Rat>,
    /// Column usable as an initial basic variable for each row, if any.
    unit_col: Vec<Option<usize>>,
    ncols: usize,
    columns: Vec<Column>,
    cost_offset: Rat,
}

fn to_standard_form(p: &LpProblem) -> StandardForm {
    let mut ncols = 0usize;
    let mut columns = Vec::with_capacity(p.variables.len());
    let mut extra_rows: Vec<(usize, Rat)> = Vec::new();
    for v in &p.variables {
        let col = match (&v.lower, &v.upper) {
            (Some(l), u) => {
                let c = ncols;
                ncols += 1;
                if let Some(u) = u {
                    extra_rows.push((c, u - l));
                }
                Column::Shifted { col: c, offset: l.clone() }
            }
            (None, Some(u)) => {
                let c = ncols;
                ncols += 1;
                Column::Mirrored { col: c, offset: u.clone() }
            }
            (None, None) => {
                let c = ncols;
                ncols += 2;
                Column::Split { plus: c, minus: c + 1 }
            }
        };
        columns.push(col);
    }

    let expand = |coeffs: &[(VarId, Rat)]| -> (BTreeMap<usize, Rat>, Rat) {
        let mut row: BTreeMap<usize, Rat> = BTreeMap::new();
        let mut shift = Rat::zero();
        let bump = |row: &mut BTreeMap<usize, Rat>, c: usize, a: Rat| {
            let e = row.entry(c).or_insert_with(Rat::zero);
            *e += a;
        };
        for (v, a) in coeffs {
            match &columns[v.0] {
                Column::Shifted { col, offset } => {
                    bump(&mut row, *col, a.clone());
                    shift += a * offset;
                }
                Column::Mirrored { col, offset } => {
                    bump(&mut row, *col, -a);
                    shift += a * offset;
                }
                Column::Split { plus, minus } => {
                    bump(&mut row, *plus, a.clone());
                    bump(&mut row, *minus, -a);
                }
            }
        }
        row.retain(|_, a| !a.is_zero());
        (row, shift)
    };

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut slack_sign: Vec<Option<Rat>> = Vec::new();
    for c in &p.constraints {
        let (row, shift) = expand(&c.coeffs);
        rows.push(row);
        rhs.push(&c.rhs - &shift);
        slack_sign.push(match c.relation {
            Relation::Le => Some(Rat::one()),
            Relation::Ge => Some(-Rat::one()),
            Relation::Eq => None,
        });
    }
    for (c, ub) in extra_rows {
        let mut row = BTreeMap::new();
        row.insert(c, Rat::one());
        rows.push(row);
        rhs.push(ub);
        slack_sign.push(Some(Rat::one()));
    }

    let mut unit_col = Vec::with_capacity(rows.len());
    for (i, sign) in slack_sign.into_iter().enumerate() {
        let flip = rhs[i].is_negative();
        if flip {
            for a in rows[i].values_mut() {
                *a = -&*a;
            }
            rhs[i] = -&rhs[i];
        }
        match sign {
            Some(s) => {
                let s = if flip { -s } else { s };
                let c = ncols;
                ncols += 1;
                let positive = s.is_positive();
                rows[i].insert(c, s);
                unit_col.push(if positive { Some(c) } else { None });
            }
            None => unit_col.push(None),
        }
    }

    let minimize = p.sense == Sense::Minimize;
    let (obj_row, obj_shift) = expand(&p.objective);
    let mut cost = vec![Rat::zero(); ncols];
    for (c, a) in obj_row {
        cost[c] = if minimize { a } else { -a };
    }
    let cost_offset = if minimize { obj_shift } else { -obj_shift };
    StandardForm { rows, rhs, cost, unit_col, ncols, columns, cost_offset }
}

/// Dense simplex tableau. Column `ncols` of each row holds the right-hand side.
struct Tableau {
    rows: Vec<Vec<Rat>>,
    basis: Vec<usize>,
    /// Reduced costs; last entry is minus the current objective value.
    obj: Vec<Rat>,
    width: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn width(&self) -> usize {
        self.width
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let rhs_col = self.width();
        let inv = self.rows[pr][pc].recip();
        if inv != Rat::one() {
            for a in self.rows[pr].iter_mut() {
                if !a.is_zero() {
                    *a *= &inv;
                }
            }
        }
        let nz: Vec<usize> = (0..=rhs_col).filter(|&j| !self.rows[pr][j].is_zero()).collect();
        let prow = std::mem::take(&mut self.rows[pr]);
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r == pr || row[pc].is_zero() {
                continue;
            }
            let f = row[pc].clone();
            for &j in &nz {
                let delta = &f * &prow[j];
                row[j] -= delta;
            }
        }
        if !self.obj[pc].is_zero() {
            let f = self.obj[pc].clone();
            for &j in &nz {
                let delta = &f * &prow[j];
                self.obj[j] -= delta;
            }
        }
        self.rows[pr] = prow;
        self.basis[pr] = pc;
    }

    /// Runs Bland's rule on columns `< limit`.
    fn optimize(&mut self, limit: usize) -> PhaseOutcome {
        let rhs_col = self.width();
        loop {
            let Some(pc) = (0..limit).find(|&j| self.obj[j].is_negative()) else {
                return PhaseOutcome::Optimal;
            };
            let mut best: Option<(usize, Rat)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if !row[pc].is_positive() {
                    continue;
                }
                let ratio = &row[rhs_col] / &row[pc];
                let better = match &best {
                    None => true,
                    Some((br, bratio)) => {
                        ratio < *bratio || (ratio == *bratio && self.basis[r] < self.basis[*br])
                    }
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            match best {
                None => return PhaseOutcome::Unbounded,
                Some((pr, _)) => self.pivot(pr, pc),
            }
        }
    }

    fn set_objective(&mut self, cost: &[Rat]) {
        let w = self.width();
        let mut obj = vec![Rat::zero(); w + 1];
        obj[..cost.len()].clone_from_slice(cost);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = obj[b].clone();
            if cb.is_zero() {
                continue;
            }
            for (j, a) in self.rows[r].iter().enumerate() {
                if !a.is_zero() {
                    obj[j] -= &cb * a;
                }
            }
        }
        self.obj = obj;
    }
}

/// Solves `problem` exactly. Identical inputs give identical outputs.
static SOLVED: AtomicU64 = AtomicU64::new(0);
static SLOWEST_NANOS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of solved LPs and the longest single solve.
pub fn solve_stats() -> (u64, Duration) {
    (SOLVED.load(Ordering::Relaxed), Duration::from_nanos(SLOWEST_NANOS.load(Ordering::Relaxed)))
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    let start = Instant::now();
    let out = solve_untimed(problem);
    SOLVED.fetch_add(1, Ordering::Relaxed);
    SLOWEST_NANOS.fetch_max(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
    out
}

fn solve_untimed(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let sf = to_standard_form(problem);
    let m = sf.rows.len();
    let n = sf.ncols;
    let n_art = sf.unit_col.iter().filter(|u| u.is_none()).count();
    let width = n + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = n;
    for i in 0..m {
        let mut row = vec![Rat::zero(); width + 1];
        for (c, a) in &sf.rows[i] {
            row[*c] = a.clone();
        }
        row[width] = sf.rhs[i].clone();
        match sf.unit_col[i] {
            Some(c) => basis.push(c),
            None => {
                row[next_art] = Rat::one();
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, obj: Vec::new(), width };

    if n_art > 0 {
        let mut phase1 = vec![Rat::zero(); width];
        for c in phase1[n..].iter_mut() {
            *c = Rat::one();
        }
        t.set_objective(&phase1);
        // Phase 1 is bounded below by zero.
        let _ = t.optimize(width);
        if !t.obj[width].is_zero() {
            return Ok(LpSolution { status: LpStatus::Infeasible, value: None, assignment: None });
        }
        // Drive remaining (zero-level) artificials out of the basis.
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= n {
                match (0..n).find(|&j| !t.rows[r][j].is_zero()) {
                    Some(pc) => t.pivot(r, pc),
                    None => {
                        // Redundant row.
                        t.rows.remove(r);
                        t.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        for row in t.rows.iter_mut() {
            let rhs = row[width].clone();
            row.truncate(n);
            row.push(rhs);
        }
        t.width = n;
    }

    t.set_objective(&sf.cost);
    if let PhaseOutcome::Unbounded = t.optimize(n) {
        return Ok(LpSolution { status: LpStatus::Unbounded, value: None, assignment: None });
    }

    let mut std_x = vec![Rat::zero(); n];
    for (r, &b) in t.basis.iter().enumerate() {
        std_x[b] = t.rows[r][n].clone();
    }
    let assignment: Vec<Rat> = sf
        .columns
        .iter()
        .map(|c| match c {
            Column::Shifted { col, offset } => offset + &std_x[*col],
            Column::Mirrored { col, offset } => offset - &std_x[*col],
            Column::Split { plus, minus } => &std_x[*plus] - &std_x[*minus],
        })
        .collect();
    let value = problem.objective_value(&assignment);
    debug_assert_eq!(
        {
            let min_val = -&t.obj[n] + &sf.cost_offset;
            if problem.sense == Sense::Minimize {
                min_val
            } else {
                -min_val
            }
        },
        value
    );
    Ok(LpSolution { status: LpStatus::Optimal, value: Some(value), assignment: Some(assignment) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::rat;

    fn one() -> Rat {
        Rat::one()
    }

    #[test]
    fn saturating_constraint() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg();
        let y = p.add_nonneg();
        p.add_constraint(vec![(x, one()), (y, one())], Relation::Le, one());
        p.set_objective(vec![(x, one()), (y, one())]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.value, Some(one()));
        assert!(p.is_satisfied_by(s.assignment.as_ref().unwrap()));
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_free();
        p.add_constraint(vec![(x, one())], Relation::Ge, one());
        p.add_constraint(vec![(x, one())], Relation::Le, Rat::zero());
        p.set_objective(vec![(x, one())]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
        assert!(s.value.is_none() && s.assignment.is_none());
    }

    /// max c s.t. (1,0) - c(1,1) = a(11/10,-1) + b(-1,11/10), a,b >= 0.
    fn proportional_transfer_lp() -> (LpProblem, VarId) {
        let mut p = LpProblem::new(Sense::Maximize);
        let c = p.add_free();
        let a = p.add_nonneg();
        let b = p.add_nonneg();
        p.add_constraint(vec![(c, one()), (a, rat(11, 10)), (b, -one())], Relation::Eq, one());
        p.add_constraint(vec![(c, one()), (a, -one()), (b, rat(11, 10))], Relation::Eq, Rat::zero());
        p.set_objective(vec![(c, one())]);
        (p, c)
    }

    /// Enumerates every basis of the 2x3 equality system (c split into c+ - c-
    /// is unnecessary: c is free, so bases are pairs of columns with a, b >= 0).
    fn brute_force_basic_solutions() -> Rat {
        // columns: c, a, b ; rows as above
        let cols = [
            [one(), one()],
            [rat(11, 10), -one()],
            [-one(), rat(11, 10)],
        ];
        let rhs = [one(), Rat::zero()];
        let mut best: Option<Rat> = None;
        for i in 0..3 {
            for j in (i + 1)..3 {
                let det = &cols[i][0] * &cols[j][1] - &cols[j][0] * &cols[i][1];
                if det.is_zero() {
                    continue;
                }
                let xi = (&rhs[0] * &cols[j][1] - &cols[j][0] * &rhs[1]) / &det;
                let xj = (&cols[i][0] * &rhs[1] - &rhs[0] * &cols[i][1]) / &det;
                let mut x = [Rat::zero(), Rat::zero(), Rat::zero()];
                x[i] = xi;
                x[j] = xj;
                if x[1].is_negative() || x[2].is_negative() {
                    continue;
                }
                let c = x[0].clone();
                best = Some(match best {
                    Some(b) => b.max(c),
                    None => c,
                });
            }
        }
        best.unwrap()
    }

    #[test]
    fn proportional_transfer_value() {
        let oracle = brute_force_basic_solutions();
        assert_eq!(oracle, rat(10, 21));
        let (p, c) = proportional_transfer_lp();
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.get(c), Some(&rat(10, 21)));
        assert_eq!(s.value, Some(oracle));
    }

    #[test]
    fn unbounded_is_a_status() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg();
        let y = p.add_nonneg();
        p.add_constraint(vec![(x, one()), (y, -one())], Relation::Le, one());
        p.set_objective(vec![(x, one())]);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn bounds_and_mirrored_variables() {
        // min x + y, x in [-3, 5], y <= 2, x + y >= -4
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var(Some(Rat::from_int(-3)), Some(Rat::from_int(5)));
        let y = p.add_var(None, Some(Rat::from_int(2)));
        p.add_constraint(vec![(x, one()), (y, one())], Relation::Ge, Rat::from_int(-4));
        p.set_objective(vec![(x, one()), (y, one())]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.value, Some(Rat::from_int(-4)));
        assert!(p.is_satisfied_by(s.assignment.as_ref().unwrap()));
    }

    #[test]
    fn redundant_equalities() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_nonneg();
        let y = p.add_nonneg();
        p.add_constraint(vec![(x, one()), (y, one())], Relation::Eq, Rat::from_int(2));
        p.add_constraint(vec![(x, rat(2, 1)), (y, rat(2, 1))], Relation::Eq, Rat::from_int(4));
        p.add_constraint(vec![(x, one())], Relation::Le, rat(1, 2));
        p.set_objective(vec![(x, Rat::from_int(3)), (y, one())]);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.value, Some(Rat::from_int(3)));
    }

    #[test]
    fn malformed_problems() {
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_var(Some(one()), Some(Rat::zero()));
        p.set_objective(vec![(x, one())]);
        assert!(matches!(solve_lp(&p), Err(LpError::InvertedBounds { var: 0, .. })));

        let mut p = LpProblem::new(Sense::Maximize);
        p.add_nonneg();
        p.add_constraint(vec![(VarId(3), one())], Relation::Le, one());
        assert_eq!(solve_lp(&p), Err(LpError::UnknownVariable { constraint: 0, var: 3 }));

        let mut p = LpProblem::new(Sense::Maximize);
        p.set_objective(vec![(VarId(0), one())]);
        assert_eq!(solve_lp(&p), Err(LpError::UnknownObjectiveVariable(0)));
    }

    #[test]
    fn fixed_and_empty() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_var(Some(rat(1, 3)), Some(rat(1, 3)));
        p.set_objective(vec![(x, one())]);
        assert_eq!(solve_lp(&p).unwrap().value, Some(rat(1, 3)));
        let p = LpProblem::new(Sense::Minimize);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.value, Some(Rat::zero()));
    }
}
