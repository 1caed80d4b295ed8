//! Dense convex QP solver for the projection and constrained-gain problems.
//!
//! Solves `min ½ xᵀ H x + gᵀ x` subject to `A_in x ≤ b_in` and `A_eq x = b_eq`
//! with a dual active-set method (Goldfarb-Idnani). The iteration starts at the
//! unconstrained minimizer, adds the most violated constraint, and drops active
//! constraints whose multiplier would turn negative. Problems here have at most a
//! few dozen variables and about a dozen constraints.

use nalgebra::{DMatrix, DVector};

use crate::constraints::{ConstraintSet, RowKind};
use crate::nav::{Covariance, StateVector15};
use crate::{NavError, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;
/// Added to the cost matrix when it is not numerically positive definite.
pub const HESSIAN_REGULARIZATION: f64 = 1e-10;
/// Added to the covariance before it is inverted into the projection weight.
pub const PROJECTION_REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hq: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: Option<DMatrix<f64>>,
    pub b_eq: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Binding inequality rows, in the order they entered.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    /// Inequality multipliers (zero for inactive rows).
    pub lambda_ineq: DVector<f64>,
    pub lambda_eq: DVector<f64>,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(hq: DMatrix<f64>, g: DVector<f64>, a_ineq: DMatrix<f64>, b_ineq: DVector<f64>) -> Result<Self> {
        let p = Self {
            hq,
            g,
            a_ineq,
            b_ineq,
            a_eq: None,
            b_eq: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_equalities(mut self, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Result<Self> {
        self.a_eq = Some(a_eq);
        self.b_eq = Some(b_eq);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.b_ineq.len()
    }

    pub fn num_eq(&self) -> usize {
        self.b_eq.as_ref().map_or(0, |b| b.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.g.len();
        let bad = |m: String| Err(NavError::InvalidConstraints(m));
        if self.hq.nrows() != n || self.hq.ncols() != n {
            return bad(format!("cost matrix is {}x{}, expected {n}x{n}", self.hq.nrows(), self.hq.ncols()));
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return bad("inequality block dimensions".into());
        }
        match (&self.a_eq, &self.b_eq) {
            (None, None) => {}
            (Some(a), Some(b)) if a.ncols() == n && a.nrows() == b.len() => {}
            _ => return bad("equality block dimensions".into()),
        }
        let all = self
            .hq
            .iter()
            .chain(self.g.iter())
            .chain(self.a_ineq.iter())
            .chain(self.a_eq.iter().flat_map(|a| a.iter()))
            .chain(self.b_eq.iter().flat_map(|b| b.iter()));
        for v in all {
            if !v.is_finite() {
                return Err(NavError::NonFinite("QP data"));
            }
        }
        // +inf bounds are allowed and simply never bind.
        if self.b_ineq.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(NavError::NonFinite("QP bound"));
        }
        let scale = self.hq.abs().max().max(1.0);
        if (&self.hq - self.hq.transpose()).abs().max() > 1e-10 * scale {
            return Err(NavError::NotPsd("QP cost matrix"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hq * x)) + self.g.dot(x)
    }
}

/// Inverse of a symmetric positive definite matrix, regularized once on failure.
fn spd_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = h.clone().cholesky() {
        return Some(c.inverse());
    }
    let n = h.nrows();
    (h + DMatrix::identity(n, n) * HESSIAN_REGULARIZATION)
        .cholesky()
        .map(|c| c.inverse())
}

pub fn solve(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    problem.validate()?;
    let h_inv = spd_inverse(&problem.hq).ok_or(NavError::NotPsd("QP cost matrix"))?;
    let x0 = -(&h_inv * &problem.g);
    Ok(dual_active_set(problem, &h_inv, x0, tol, max_iter))
}

struct Row {
    a: DVector<f64>,
    b: f64,
    /// Index into the inequality list, or `None` for an equality.
    ineq: Option<usize>,
    eq: usize,
    /// -1 when an equality row was negated on entry.
    sign: f64,
}

/// Goldfarb-Idnani iteration given `H⁻¹` and the unconstrained minimizer.
pub(crate) fn dual_active_set(
    problem: &QpProblem,
    h_inv: &DMatrix<f64>,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> QpSolution {
    let l = problem.num_ineq();
    let m = problem.num_eq();
    let mut x = x0;
    let mut active: Vec<Row> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let finish = |x: DVector<f64>, active: &[Row], u: &[f64], status, iterations| {
        let mut lambda_ineq = DVector::zeros(l);
        let mut lambda_eq = DVector::zeros(m);
        let mut active_set = Vec::new();
        for (row, &ui) in active.iter().zip(u) {
            match row.ineq {
                Some(i) => {
                    lambda_ineq[i] = ui;
                    active_set.push(i);
                }
                None => lambda_eq[row.eq] = ui * row.sign,
            }
        }
        QpSolution {
            x,
            active_set,
            status,
            lambda_ineq,
            lambda_eq,
            iterations,
        }
    };

    // Equalities first; each enters with the sign that makes it violated.
    let mut pending_eq: Vec<Row> = match (&problem.a_eq, &problem.b_eq) {
        (Some(a), Some(b)) => (0..m)
            .map(|j| Row {
                a: a.row(j).transpose(),
                b: b[j],
                ineq: None,
                eq: j,
                sign: 1.0,
            })
            .collect(),
        _ => Vec::new(),
    };
    pending_eq.reverse();

    loop {
        // Pick the constraint to add.
        let mut next: Option<(Row, f64)> = None;
        while let Some(mut row) = pending_eq.pop() {
            if row.a.norm() == 0.0 {
                if row.b.abs() > tol {
                    return finish(x, &active, &u, QpStatus::Infeasible, iterations);
                }
                continue;
            }
            // Satisfied equalities are still added so they are held fixed.
            let s = row.a.dot(&x) - row.b;
            if s < 0.0 {
                row.a = -row.a;
                row.b = -row.b;
                row.sign = -1.0;
            }
            next = Some((row, s.abs()));
            break;
        }
        if next.is_none() {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..l {
                if active.iter().any(|r| r.ineq == Some(i)) {
                    continue;
                }
                let v = problem.a_ineq.row(i).dot(&x.transpose()) - problem.b_ineq[i];
                if v > tol && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((i, v));
                }
            }
            match best {
                None => return finish(x, &active, &u, QpStatus::Optimal, iterations),
                Some((i, v)) => {
                    next = Some((
                        Row {
                            a: problem.a_ineq.row(i).transpose(),
                            b: problem.b_ineq[i],
                            ineq: Some(i),
                            eq: 0,
                            sign: 1.0,
                        },
                        v,
                    ))
                }
            }
        }
        let (row_p, _) = next.expect("constraint selected");
        let mut u_p = 0.0;

        // Step until the chosen constraint is satisfied with equality.
        loop {
            iterations += 1;
            if iterations > max_iter {
                return finish(x, &active, &u, QpStatus::MaxIter, iterations);
            }
            let (z, r) = directions(h_inv, &active, &row_p.a);
            let slack = row_p.a.dot(&x) - row_p.b;
            let curv = -row_p.a.dot(&z);
            // Relative to the unconstrained curvature, so a normal that lies in
            // the span of the active rows counts as dependent despite round-off.
            let free = row_p.a.dot(&(h_inv * &row_p.a));
            let full = if curv > 1e-10 * free {
                Some(slack / curv)
            } else {
                None
            };
            let mut partial: Option<(usize, f64)> = None;
            for (k, (row, &uk)) in active.iter().zip(&u).enumerate() {
                if row.ineq.is_some() && r[k] > 1e-14 {
                    let t = uk / r[k];
                    if partial.is_none_or(|(_, pt)| t < pt) {
                        partial = Some((k, t));
                    }
                }
            }
            let t = match (full, partial) {
                (None, None) => return finish(x, &active, &u, QpStatus::Infeasible, iterations),
                (Some(f), None) => f,
                (None, Some((_, p))) => p,
                (Some(f), Some((_, p))) => f.min(p),
            };
            if full.is_some() {
                x += &z * t;
            }
            for (k, uk) in u.iter_mut().enumerate() {
                *uk -= t * r[k];
            }
            u_p += t;
            if full == Some(t) {
                active.push(row_p);
                u.push(u_p);
                break;
            }
            let (drop, _) = partial.expect("partial step");
            active.remove(drop);
            u.remove(drop);
        }
    }
}

/// Primal step `z` and multiplier step `r` for adding normal `a` to the active set.
fn directions(h_inv: &DMatrix<f64>, active: &[Row], a: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let ha = h_inv * a;
    if active.is_empty() {
        return (-ha, DVector::zeros(0));
    }
    let n = DMatrix::from_columns(&active.iter().map(|r| r.a.clone()).collect::<Vec<_>>());
    let hn = h_inv * &n;
    let gram = n.transpose() * &hn;
    let rhs = n.transpose() * &ha;
    let r = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(active.len())),
    };
    let z = -(ha - hn * &r);
    (z, r)
}

/// Weighted projection of a 15-slot state onto `cs`.
///
/// Minimizes `(x - x₀)ᵀ P̃⁻¹ (x - x₀)` subject to `C x ≤ d` with
/// `P̃ = P + 1e-9·I`. A feasible prior is returned unchanged.
pub fn project_state(
    x_prior: &StateVector15,
    p: &Covariance,
    cs: &ConstraintSet,
    tol: f64,
) -> Result<StateVector15> {
    Ok(project_state_detailed(x_prior, p, cs, tol)?.0)
}

/// As [`project_state`], also returning the solver output.
pub fn project_state_detailed(
    x_prior: &StateVector15,
    p: &Covariance,
    cs: &ConstraintSet,
    tol: f64,
) -> Result<(StateVector15, Option<QpSolution>)> {
    let l = cs.len();
    let mut a = DMatrix::zeros(l, 15);
    let mut b = DVector::zeros(l);
    for (i, row) in cs.rows().iter().enumerate() {
        if row.kind != RowKind::Linear {
            return Err(NavError::InvalidConstraints(format!(
                "row '{}' is not linear in the state vector",
                row.label
            )));
        }
        a.set_row(i, &row.row.transpose());
        b[i] = row.bound;
    }
    cs.check_consistent()?;
    let x0 = DVector::from_column_slice(x_prior.0.as_slice());
    if (0..l).all(|i| a.row(i).dot(&x0.transpose()) <= b[i] + tol) {
        return Ok((*x_prior, None));
    }
    let p_reg = DMatrix::from_column_slice(15, 15, p.0.as_slice()) + DMatrix::identity(15, 15) * PROJECTION_REGULARIZATION;
    let p_reg = (&p_reg + p_reg.transpose()) * 0.5;
    let hq = spd_inverse(&p_reg).ok_or(NavError::NotPsd("projection covariance"))?;
    let hq = (&hq + hq.transpose()) * 0.5;
    let g = -(&hq * &x0);
    let problem = QpProblem::new(hq, g, a, b)?;
    let sol = dual_active_set(&problem, &p_reg, x0, tol, DEFAULT_MAX_ITER);
    match sol.status {
        QpStatus::Optimal => {
            let out = StateVector15(crate::nav::Vec15::from_column_slice(sol.x.as_slice()));
            Ok((out, Some(sol)))
        }
        QpStatus::Infeasible => Err(NavError::Infeasible),
        QpStatus::MaxIter => Err(NavError::MaxIterations(sol.iterations)),
    }
}
