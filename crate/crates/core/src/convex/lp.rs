//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems are `max cᵀx` (or pure feasibility) subject to rows
//! `aᵀx {≤, ≥, =} b`, `x ≥ 0` and optional upper bounds. The arithmetic is
//! generic: `f32`/`f64` use a pivot tolerance, `BigRational` is exact.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Number type the simplex can run on.
pub trait LpNum: Num + Signed + Clone + PartialOrd + Debug {
    /// Magnitudes at or below this are treated as zero.
    fn tolerance() -> Self;
    fn from_f64(x: f64) -> Option<Self>;
    fn to_f64(&self) -> f64;
}

impl LpNum for f64 {
    fn tolerance() -> Self {
        1e-10
    }
    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl LpNum for f32 {
    fn tolerance() -> Self {
        1e-5
    }
    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x as f32)
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl LpNum for BigRational {
    fn tolerance() -> Self {
        BigRational::zero()
    }
    fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            let n = ToPrimitive::to_f64(self.numer()).unwrap_or(f64::NAN);
            let d = ToPrimitive::to_f64(self.denom()).unwrap_or(f64::NAN);
            n / d
        })
    }
}

/// Exact rational from an integer ratio.
pub fn rational(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sense {
    Maximize,
    Minimize,
    Feasibility,
}

/// Dense LP over `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    num_vars: usize,
    sense: Sense,
    objective: Vec<T>,
    constraints: Vec<LinearConstraint<T>>,
    upper_bounds: Vec<Option<T>>,
}

impl<T: LpNum> LpProblem<T> {
    pub fn feasibility(num_vars: usize) -> Self {
        Self {
            num_vars,
            sense: Sense::Feasibility,
            objective: vec![T::zero(); num_vars],
            constraints: Vec::new(),
            upper_bounds: vec![None; num_vars],
        }
    }

    pub fn maximize(objective: Vec<T>) -> Self {
        Self {
            num_vars: objective.len(),
            sense: Sense::Maximize,
            upper_bounds: vec![None; objective.len()],
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn minimize(objective: Vec<T>) -> Self {
        Self {
            sense: Sense::Minimize,
            ..Self::maximize(objective)
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraint(mut self, coeffs: Vec<T>, relation: Relation, rhs: T) -> Self {
        self.add_constraint(coeffs, relation, rhs);
        self
    }

    pub fn add_constraint(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        self.constraints.push(LinearConstraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn upper_bound(mut self, var: usize, bound: T) -> Self {
        self.upper_bounds[var] = Some(bound);
        self
    }

    pub fn constraints(&self) -> &[LinearConstraint<T>] {
        &self.constraints
    }

    fn validate(&self) -> Result<()> {
        for c in &self.constraints {
            if c.coeffs.len() != self.num_vars {
                return Err(Error::Dimension {
                    expected: self.num_vars,
                    found: c.coeffs.len(),
                });
            }
        }
        if self.objective.len() != self.num_vars || self.upper_bounds.len() != self.num_vars {
            return Err(Error::Dimension {
                expected: self.num_vars,
                found: self.objective.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    /// Objective in the problem's own sense (zero for feasibility problems).
    pub objective: T,
    /// Row duals of the equivalent maximization: `≥ 0` for `≤` rows, `≤ 0`
    /// for `≥` rows, free for equalities.
    pub duals: Vec<T>,
    /// Duals of the upper-bound rows (zero where no bound is set).
    pub bound_duals: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus<T> {
    Optimal(LpSolution<T>),
    Infeasible,
    Unbounded,
}

impl<T> LpStatus<T> {
    pub fn solution(&self) -> Option<&LpSolution<T>> {
        match self {
            LpStatus::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    /// Original row index of each tableau row.
    origin: Vec<usize>,
    tol: T,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl<T: LpNum> Tableau<T> {
    fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len() - 1)
    }

    fn reduced_costs(&self, cost: &[T]) -> Vec<T> {
        let w = self.width();
        (0..w)
            .map(|j| {
                let mut d = cost[j].clone();
                for (i, row) in self.rows.iter().enumerate() {
                    let cb = &cost[self.basis[i]];
                    if !cb.is_zero() && !row[j].is_zero() {
                        d = d - cb.clone() * row[j].clone();
                    }
                }
                d
            })
            .collect()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, p) in row.iter_mut().zip(&prow) {
                if !p.is_zero() {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
            row[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost` over the current basis using Bland's rule.
    fn run(&mut self, cost: &[T], allowed: &[bool]) -> Phase {
        loop {
            let d = self.reduced_costs(cost);
            let Some(enter) = (0..d.len()).find(|&j| allowed[j] && d[j] > self.tol) else {
                return Phase::Optimal;
            };
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = &row[enter];
                if *a > self.tol {
                    let ratio = row[row.len() - 1].clone() / a.clone();
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                None => return Phase::Unbounded,
                Some((r, _)) => self.pivot(r, enter),
            }
        }
    }
}

/// Solves `problem` with the two-phase simplex method.
pub fn lp_solve<T: LpNum>(problem: &LpProblem<T>) -> Result<LpStatus<T>> {
    problem.validate()?;
    let n = problem.num_vars;
    let mut rows: Vec<LinearConstraint<T>> = problem.constraints.clone();
    for (j, ub) in problem.upper_bounds.iter().enumerate() {
        if let Some(u) = ub {
            let mut coeffs = vec![T::zero(); n];
            coeffs[j] = T::one();
            rows.push(LinearConstraint {
                coeffs,
                relation: Relation::Le,
                rhs: u.clone(),
            });
        }
    }
    let m = rows.len();

    // Column layout: originals, then one slack/surplus per inequality, then
    // one artificial per ≥/= row.
    let mut sign = vec![T::one(); m];
    let mut rel = Vec::with_capacity(m);
    for (i, r) in rows.iter().enumerate() {
        let flip = r.rhs < T::zero();
        if flip {
            sign[i] = -T::one();
        }
        rel.push(match (r.relation, flip) {
            (Relation::Le, false) | (Relation::Ge, true) => Relation::Le,
            (Relation::Ge, false) | (Relation::Le, true) => Relation::Ge,
            (Relation::Eq, _) => Relation::Eq,
        });
    }
    let n_slack = rel.iter().filter(|r| **r != Relation::Eq).count();
    let n_art = rel.iter().filter(|r| **r != Relation::Le).count();
    let width = n + n_slack + n_art;
    let mut tab_rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut id_col = Vec::with_capacity(m);
    let (mut s_next, mut a_next) = (n, n + n_slack);
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![T::zero(); width + 1];
        for j in 0..n {
            row[j] = sign[i].clone() * r.coeffs[j].clone();
        }
        row[width] = sign[i].clone() * r.rhs.clone();
        match rel[i] {
            Relation::Le => {
                row[s_next] = T::one();
                basis.push(s_next);
                id_col.push(s_next);
                s_next += 1;
            }
            Relation::Ge => {
                row[s_next] = -T::one();
                s_next += 1;
                row[a_next] = T::one();
                basis.push(a_next);
                id_col.push(a_next);
                a_next += 1;
            }
            Relation::Eq => {
                row[a_next] = T::one();
                basis.push(a_next);
                id_col.push(a_next);
                a_next += 1;
            }
        }
        tab_rows.push(row);
    }
    let scale = rows
        .iter()
        .map(|r| r.rhs.abs())
        .fold(T::one(), |a, b| if b > a { b } else { a });
    let mut tab = Tableau {
        rows: tab_rows,
        basis,
        origin: (0..m).collect(),
        tol: T::tolerance(),
    };
    let is_art = |j: usize| j >= n + n_slack && j < width;

    if n_art > 0 {
        let cost: Vec<T> = (0..width)
            .map(|j| if is_art(j) { -T::one() } else { T::zero() })
            .collect();
        let allowed = vec![true; width];
        tab.run(&cost, &allowed);
        let infeas: T = tab
            .rows
            .iter()
            .zip(&tab.basis)
            .filter(|(_, b)| is_art(**b))
            .fold(T::zero(), |acc, (row, _)| acc + row[width].clone());
        if infeas > T::tolerance() * scale.clone() {
            return Ok(LpStatus::Infeasible);
        }
        // Drive remaining zero-level artificials out; drop redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if is_art(tab.basis[i]) {
                let col = (0..n + n_slack).find(|&j| tab.rows[i][j].abs() > tab.tol);
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        tab.origin.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = vec![T::zero(); width];
    for j in 0..n {
        cost[j] = match problem.sense {
            Sense::Maximize => problem.objective[j].clone(),
            Sense::Minimize => -problem.objective[j].clone(),
            Sense::Feasibility => T::zero(),
        };
    }
    let allowed: Vec<bool> = (0..width).map(|j| !is_art(j)).collect();
    if let Phase::Unbounded = tab.run(&cost, &allowed) {
        return Ok(LpStatus::Unbounded);
    }

    let mut x = vec![T::zero(); n];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        if b < n {
            x[b] = row[width].clone();
        }
    }
    let d = tab.reduced_costs(&cost);
    let mut all_duals = vec![T::zero(); m];
    for &orig in &tab.origin {
        all_duals[orig] = -(d[id_col[orig]].clone()) * sign[orig].clone();
    }
    let mut objective = T::zero();
    for j in 0..n {
        objective = objective + problem.objective[j].clone() * x[j].clone();
    }
    if problem.sense == Sense::Feasibility {
        objective = T::zero();
    }
    let n_rows = problem.constraints.len();
    let mut bound_duals = vec![T::zero(); n];
    let mut extra = all_duals.split_off(n_rows).into_iter();
    for (j, ub) in problem.upper_bounds.iter().enumerate() {
        if ub.is_some() {
            bound_duals[j] = extra.next().unwrap_or_else(T::zero);
        }
    }
    Ok(LpStatus::Optimal(LpSolution {
        x,
        objective,
        duals: all_duals,
        bound_duals,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        rational(n, 1)
    }

    #[test]
    fn trivial_box_is_feasible() {
        let lp = LpProblem::maximize(vec![0.0]).constraint(vec![1.0], Relation::Le, 1.0);
        let sol = lp_solve(&lp).unwrap();
        let x = sol.solution().unwrap().x[0];
        assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn capacity_shortfall_is_infeasible() {
        // t1 + t2 ≤ 1, 3 t1 + 2 t2 ≥ 4 > 1·max(3, 2).
        let lp = LpProblem::feasibility(2)
            .constraint(vec![1.0, 1.0], Relation::Le, 1.0)
            .constraint(vec![3.0, 2.0], Relation::Ge, 4.0);
        assert_eq!(lp_solve(&lp).unwrap(), LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_is_detected() {
        let lp = LpProblem::maximize(vec![1.0, 1.0]).constraint(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp_solve(&lp).unwrap(), LpStatus::Unbounded);
    }

    #[test]
    fn exact_rational_optimum() {
        // max 3x + 2y s.t. x + y ≤ 4, x + 3y ≤ 7, x ≤ 3  →  (3, 1), value 11.
        let lp = LpProblem::maximize(vec![q(3), q(2)])
            .constraint(vec![q(1), q(1)], Relation::Le, q(4))
            .constraint(vec![q(1), q(3)], Relation::Le, q(7))
            .upper_bound(0, q(3));
        let s = lp_solve(&lp).unwrap();
        let s = s.solution().unwrap();
        assert_eq!(s.x, vec![q(3), q(1)]);
        assert_eq!(s.objective, q(11));
        assert_eq!(s.duals, vec![q(2), q(0)]);
        assert_eq!(s.bound_duals, vec![q(1), q(0)]);
    }

    #[test]
    fn bland_terminates_on_beale_cycling_example() {
        // Beale's example cycles under the largest-coefficient rule.
        let lp = LpProblem::maximize(vec![rational(3, 4), q(-150), rational(1, 50), q(-6)])
            .constraint(
                vec![rational(1, 4), q(-60), rational(-1, 25), q(9)],
                Relation::Le,
                q(0),
            )
            .constraint(
                vec![rational(1, 2), q(-90), rational(-1, 50), q(3)],
                Relation::Le,
                q(0),
            )
            .constraint(vec![q(0), q(0), q(1), q(0)], Relation::Le, q(1));
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.solution().unwrap().objective, rational(1, 20));
    }

    #[test]
    fn equality_and_redundant_rows() {
        let lp = LpProblem::minimize(vec![1.0, 2.0])
            .constraint(vec![1.0, 1.0], Relation::Eq, 2.0)
            .constraint(vec![2.0, 2.0], Relation::Eq, 4.0)
            .constraint(vec![1.0, 0.0], Relation::Le, 1.5);
        let s = lp_solve(&lp).unwrap();
        let s = s.solution().unwrap();
        assert!((s.x[0] - 1.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        assert!((s.objective - 2.5).abs() < 1e-12);
    }

    #[test]
    fn single_precision_solves_small_problems() {
        let lp = LpProblem::maximize(vec![1.0f32, 1.0])
            .constraint(vec![1.0, 2.0], Relation::Le, 4.0)
            .constraint(vec![3.0, 1.0], Relation::Le, 6.0);
        let s = lp_solve(&lp).unwrap();
        let s = s.solution().unwrap();
        assert!((s.objective - 2.8).abs() < 1e-5);
    }

    /// Brute-force oracle: best objective over all basic feasible solutions
    /// of `max cᵀx, Ax ≤ b, x ≥ 0`, by enumerating `n`-subsets of the
    /// `m + n` constraints as equalities.
    fn vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
        let n = c.len();
        let m = a.len();
        let mut planes: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e, 0.0));
        }
        let mut best: Option<f64> = None;
        for subset in itertools::Itertools::combinations(0..m + n, n) {
            let mut mat = nalgebra::DMatrix::<f64>::zeros(n, n);
            let mut rhs = nalgebra::DVector::<f64>::zeros(n);
            for (r, &k) in subset.iter().enumerate() {
                for j in 0..n {
                    mat[(r, j)] = planes[k].0[j];
                }
                rhs[r] = planes[k].1;
            }
            let Some(x) = mat.lu().solve(&rhs) else {
                continue;
            };
            let feasible = x.iter().all(|v| *v >= -1e-9)
                && a.iter().zip(b).all(|(row, bi)| {
                    row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= bi + 1e-9
                });
            if feasible {
                let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration_and_slackness(
            c in prop::collection::vec(-3.0f64..3.0, 3),
            a in prop::collection::vec(prop::collection::vec(-1.0f64..3.0, 3), 4),
            b in prop::collection::vec(0.5f64..4.0, 4),
        ) {
            // A box keeps the problem bounded.
            let mut lp = LpProblem::maximize(c.clone());
            for (row, bi) in a.iter().zip(&b) {
                lp.add_constraint(row.clone(), Relation::Le, *bi);
            }
            let mut rows = a.clone();
            let mut rhs = b.clone();
            for j in 0..3 {
                let mut e = vec![0.0; 3];
                e[j] = 1.0;
                lp.add_constraint(e.clone(), Relation::Le, 5.0);
                rows.push(e);
                rhs.push(5.0);
            }
            let oracle = vertex_oracle(&c, &rows, &rhs).unwrap();
            let status = lp_solve(&lp).unwrap();
            let s = status.solution().unwrap();
            prop_assert!((s.objective - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
            for (row, (bi, y)) in rows.iter().zip(rhs.iter().zip(&s.duals)) {
                let lhs: f64 = row.iter().zip(&s.x).map(|(p, q)| p * q).sum();
                prop_assert!(lhs <= bi + 1e-9);
                prop_assert!(*y >= -1e-9);
                prop_assert!((y * (bi - lhs)).abs() <= 1e-9);
            }
            for j in 0..3 {
                let aty: f64 = rows.iter().zip(&s.duals).map(|(row, y)| row[j] * y).sum();
                prop_assert!(aty >= c[j] - 1e-9);
                prop_assert!((s.x[j] * (aty - c[j])).abs() <= 1e-9);
            }
        }
    }
}
