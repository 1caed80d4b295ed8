//! Shared helpers for the integration tests: an exhaustive active-set QP
//! oracle and random problem generators.
#![allow(dead_code)]

use dualnav::nav::Mat15;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solves `min ½xᵀHx + gᵀx` s.t. `A x ≤ b` by trying every subset of rows as
/// equalities and keeping the cheapest candidate that is primal feasible with
/// non-negative multipliers. `H` must be positive definite.
pub fn enumerate_qp(h: &DMatrix<f64>, g: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let l = b.len();
    assert!(l <= 16, "oracle is exponential in the row count");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << l) {
        let rows: Vec<usize> = (0..l).filter(|i| mask & (1 << i) != 0).collect();
        let m = rows.len();
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from(&(-g));
        for (k, &i) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + k, j)] = a[(i, j)];
                kkt[(j, n + k)] = a[(i, j)];
            }
            rhs[n + k] = b[i];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let mult = sol.rows(n, m);
        if mult.iter().any(|u| *u < -1e-9) {
            continue;
        }
        if (0..l).any(|i| a.row(i).transpose().dot(&x) > b[i] + 1e-9) {
            continue;
        }
        let cost = 0.5 * x.dot(&(h * &x)) + g.dot(&x);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, x));
        }
    }
    best.map(|(_, x)| x)
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

pub fn random_spd15(rng: &mut ChaCha8Rng, floor: f64) -> Mat15 {
    let a = Mat15::from_fn(|_, _| rng.random_range(-1.0..1.0));
    a * a.transpose() + Mat15::identity() * floor
}

pub fn to_dmatrix(m: &Mat15) -> DMatrix<f64> {
    DMatrix::from_column_slice(15, 15, m.as_slice())
}

/// Inverse via LU, for building projection costs in the oracle path.
pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}
