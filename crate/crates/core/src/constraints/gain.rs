use nalgebra::{DMatrix, DVector, SMatrix};

use crate::eskf::{gnss_measurement, FilterConfig, FilterState};
use crate::nav::GnssFix;
use crate::qp::{dual_active_set, QpProblem, QpSolution, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::{NavError, Result};

use super::sets::ConstraintSet;

/// Tolerance of the posterior feasibility check, in each row's native units.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Re-linearizations of the attitude rows before the last candidate is kept.
const MAX_RELINEARIZATIONS: usize = 5;

/// Gain minimizing `trace[(I - K H) P (I - K H)ᵀ + K R Kᵀ]` subject to
/// `base + J (K δy) ≤ d` row-wise.
///
/// `jac` maps an error-state correction `δx = K δy` to the change of each
/// constrained quantity, `base` is each quantity before the update. The
/// variables are the entries of `K` in row-major order, so the cost is
/// block-diagonal in the innovation covariance `S`.
pub fn constrained_gain(
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    residual: &DVector<f64>,
    jac: &DMatrix<f64>,
    base: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<(DMatrix<f64>, QpSolution)> {
    let n = p.nrows();
    let m = h.nrows();
    let l = jac.nrows();
    if p.ncols() != n || h.ncols() != n || r.shape() != (m, m) || residual.len() != m {
        return Err(NavError::InvalidConstraints("gain problem dimensions".into()));
    }
    if jac.ncols() != n || base.len() != l || d.len() != l {
        return Err(NavError::InvalidConstraints("gain constraint dimensions".into()));
    }
    let pht = p * h.transpose();
    let s = h * &pht + r;
    let s = (&s + s.transpose()) * 0.5;
    let s_inv = s
        .clone()
        .cholesky()
        .ok_or(NavError::SingularInnovation("constrained gain"))?
        .inverse();
    let k0 = &pht * &s_inv;

    let nv = n * m;
    let mut hq = DMatrix::zeros(nv, nv);
    let mut h_inv = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    let mut x0 = DVector::zeros(nv);
    for row in 0..n {
        let o = row * m;
        hq.view_mut((o, o), (m, m)).copy_from(&s);
        h_inv.view_mut((o, o), (m, m)).copy_from(&s_inv);
        for j in 0..m {
            g[o + j] = -pht[(row, j)];
            x0[o + j] = k0[(row, j)];
        }
    }
    // Σ_r J_ir (K δy)_r = Σ_r Σ_j J_ir δy_j K_rj
    let mut a = DMatrix::zeros(l, nv);
    let mut b = DVector::zeros(l);
    for i in 0..l {
        for row in 0..n {
            for j in 0..m {
                a[(i, row * m + j)] = jac[(i, row)] * residual[j];
            }
        }
        b[i] = d[i] - base[i];
    }
    let problem = QpProblem::new(hq, g, a, b)?;
    let sol = dual_active_set(&problem, &h_inv, x0, DEFAULT_TOL, DEFAULT_MAX_ITER);
    let k = DMatrix::from_row_slice(n, m, sol.x.as_slice());
    Ok((k, sol))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainOutcome {
    pub state: FilterState,
    pub gain: SMatrix<f64, 15, 3>,
    /// The unconstrained posterior violated at least one row.
    pub constrained: bool,
    /// The solver failed and the unconstrained gain was applied.
    pub fallback: bool,
    /// The constrained posterior still violates a row after re-linearization.
    pub residual_violation: bool,
}

pub fn constrained_gain_update(
    fs: &FilterState,
    fix: &GnssFix,
    cs: &ConstraintSet,
    cfg: &FilterConfig,
) -> Result<FilterState> {
    Ok(constrained_gain_update_detailed(fs, fix, cs, cfg)?.state)
}

/// GNSS update whose gain is re-optimized when the standard posterior leaves
/// the envelope.
///
/// Constraint rows are linearized in the correction around the current
/// candidate and re-linearized until the corrected nominal state satisfies
/// every row. A feasible standard posterior is returned exactly as
/// [`gnss_update`](crate::eskf::gnss_update) would.
pub fn constrained_gain_update_detailed(
    fs: &FilterState,
    fix: &GnssFix,
    cs: &ConstraintSet,
    cfg: &FilterConfig,
) -> Result<GainOutcome> {
    let meas = gnss_measurement(&fs.nominal, fix, &cfg.r_gnss);
    let k = meas.gain(&fs.p.0)?;
    let tentative = meas.apply(fs, &k);
    if cs.is_satisfied(&tentative.nominal, FEASIBILITY_TOL)? {
        return Ok(GainOutcome {
            state: tentative,
            gain: k,
            constrained: false,
            fallback: false,
            residual_violation: false,
        });
    }
    let fallback = GainOutcome {
        state: tentative,
        gain: k,
        constrained: true,
        fallback: true,
        residual_violation: true,
    };

    let p = DMatrix::from_column_slice(15, 15, fs.p.0.as_slice());
    let h = DMatrix::from_column_slice(3, 15, meas.h.as_slice());
    let r = DMatrix::from_column_slice(3, 3, meas.r.as_slice());
    let dy = DVector::from_column_slice(meas.residual.as_slice());
    let d = cs.d();

    // Linearization point: the nominal state after the current candidate correction.
    let mut lin_state = tentative.nominal;
    let mut lin_dx = DVector::from_column_slice((k * meas.residual).as_slice());
    let mut best: Option<GainOutcome> = None;
    for _ in 0..MAX_RELINEARIZATIONS {
        let jac = cs.correction_sensitivities(&lin_state);
        let mut base = DVector::zeros(cs.len());
        for (i, row) in cs.rows().iter().enumerate() {
            // value(δx) ≈ value(lin) + J (δx - δx_lin)
            base[i] = row.value(&lin_state)? - jac.row(i).dot(&lin_dx.transpose());
        }
        let (kc, sol) = match constrained_gain(&p, &h, &r, &dy, &jac, &base, &d) {
            Ok(v) => v,
            Err(NavError::SingularInnovation(_)) => return Ok(fallback),
            Err(e) => return Err(e),
        };
        if sol.status != QpStatus::Optimal {
            return Ok(best.unwrap_or(fallback));
        }
        let kc = SMatrix::<f64, 15, 3>::from_column_slice(kc.as_slice());
        let state = meas.apply(fs, &kc);
        let ok = cs.is_satisfied(&state.nominal, FEASIBILITY_TOL)?;
        let outcome = GainOutcome {
            state,
            gain: kc,
            constrained: true,
            fallback: false,
            residual_violation: !ok,
        };
        if ok {
            return Ok(outcome);
        }
        lin_state = outcome.state.nominal;
        lin_dx = DVector::from_column_slice((kc * meas.residual).as_slice());
        best = Some(outcome);
    }
    Ok(best.unwrap_or(fallback))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_altitude_example() {
        // prior 99, fix 110, P = 4, R = 1, h ≤ 100.
        let p = DMatrix::from_element(1, 1, 4.0);
        let h = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1.0);
        let dy = DVector::from_element(1, 99.0 - 110.0);
        // h⁺ = h⁻ - δx
        let jac = DMatrix::from_element(1, 1, -1.0);
        let base = DVector::from_element(1, 99.0);
        let d = DVector::from_element(1, 100.0);
        let unconstrained: f64 = 99.0 - 0.8 * dy[0];
        assert!((unconstrained - 107.8).abs() < 1e-12);
        let (k, sol) = constrained_gain(&p, &h, &r, &dy, &jac, &base, &d).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((k[(0, 0)] - 1.0 / 11.0).abs() < 1e-12);
        assert!((99.0 - k[(0, 0)] * dy[0] - 100.0).abs() < 1e-10);
    }
}
