//! Unconstrained error-state EKF: covariance prediction, GNSS position update
//! with a Joseph-form covariance, and injection of the error estimate into the
//! nominal state.

use nalgebra::{Cholesky, DMatrix, Matrix3, SMatrix, SVector, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::nav::{
    process_noise, propagate_nominal, slot, state_transition, Covariance, ErrorState, GnssFix,
    ImuNoise, ImuSample, Mat15, NavState, PhiMode, Vec15, GRAVITY,
};
use crate::{NavError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub noise: ImuNoise,
    /// GNSS position covariance, m².
    pub r_gnss: Matrix3<f64>,
    /// Initial error-state covariance.
    pub p0: Mat15,
    pub phi_mode: PhiMode,
    pub gravity: f64,
}

impl FilterConfig {
    pub fn new(noise: ImuNoise, r_gnss: Matrix3<f64>, p0: Mat15) -> Result<Self> {
        let cfg = Self {
            noise,
            r_gnss,
            p0,
            phi_mode: PhiMode::Exact,
            gravity: GRAVITY,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_psd(&self.r_gnss, "r_gnss")?;
        check_psd(&self.p0, "p0")?;
        // Negative densities are reported by process_noise itself.
        process_noise(&self.noise, &UnitQuaternion::identity(), 0.0)?;
        Ok(())
    }
}

pub(crate) fn check_psd<const N: usize>(m: &SMatrix<f64, N, N>, name: &'static str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(NavError::NonFinite(name));
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-9 * scale {
        return Err(NavError::NotPsd(name));
    }
    let d = DMatrix::from_column_slice(N, N, m.as_slice());
    if d.symmetric_eigenvalues().min() < -1e-9 * scale {
        return Err(NavError::NotPsd(name));
    }
    Ok(())
}

/// Nominal state and error covariance at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub nominal: NavState,
    pub p: Covariance,
    pub t: f64,
}

impl FilterState {
    pub fn new(nominal: NavState, p: Covariance, t: f64) -> Self {
        Self { nominal, p, t }
    }

    /// One-sigma uncertainty per error-state slot.
    pub fn sigma(&self) -> Vec15 {
        self.p.0.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Propagates the nominal state and covariance to `imu.t`.
pub fn predict(fs: &FilterState, imu: &ImuSample, cfg: &FilterConfig) -> Result<FilterState> {
    let dt = imu.t - fs.t;
    if !(dt > 0.0) {
        return Err(NavError::NonIncreasingTime { prev: fs.t, next: imu.t });
    }
    let phi = state_transition(&fs.nominal, imu, dt, cfg.phi_mode)?;
    let q = process_noise(&cfg.noise, &fs.nominal.att, dt)?;
    let nominal = propagate_nominal(&fs.nominal, imu, dt, cfg.gravity)?;
    let p = phi * fs.p.0 * phi.transpose() + q;
    Ok(FilterState {
        nominal,
        p: Covariance::symmetrized(p),
        t: imu.t,
    })
}

/// Injects an error estimate into the nominal state.
///
/// `p - δp`, `v - δv`, `T⁺ = (I + [ε]×)ᵀ T⁻` realized as a left rotation by `-ε`,
/// and `b + δb`.
pub fn correct_nominal(state: &NavState, dx: &ErrorState) -> NavState {
    let mut att = UnitQuaternion::from_scaled_axis(-dx.eps()) * state.att;
    att.renormalize();
    NavState {
        p_ned: state.p_ned - dx.dp(),
        v_ned: state.v_ned - dx.dv(),
        att,
        b_a: state.b_a + dx.dba(),
        b_g: state.b_g + dx.dbg(),
    }
}

/// A linearized measurement: residual `δy = ŷ - y`, sensitivity `H` and noise `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement<const M: usize> {
    pub residual: SVector<f64, M>,
    pub h: SMatrix<f64, M, 15>,
    pub r: SMatrix<f64, M, M>,
}

impl<const M: usize> Measurement<M> {
    /// Innovation covariance `H P Hᵀ + R`.
    pub fn innovation_covariance(&self, p: &Mat15) -> SMatrix<f64, M, M> {
        self.h * p * self.h.transpose() + self.r
    }

    /// Optimal gain `K = P Hᵀ (H P Hᵀ + R)⁻¹`.
    pub fn gain(&self, p: &Mat15) -> Result<SMatrix<f64, 15, M>> {
        let s = self.innovation_covariance(p);
        let chol = Cholesky::new(s).ok_or(NavError::SingularInnovation("Cholesky failed"))?;
        let kt = chol.solve(&(self.h * p));
        let k = kt.transpose();
        if !k.iter().all(|v| v.is_finite()) {
            return Err(NavError::SingularInnovation("non-finite gain"));
        }
        Ok(k)
    }

    /// `(I - K H) P (I - K H)ᵀ + K R Kᵀ`, valid for any gain.
    pub fn joseph(&self, p: &Mat15, k: &SMatrix<f64, 15, M>) -> Covariance {
        let a = Mat15::identity() - k * self.h;
        Covariance::symmetrized(a * p * a.transpose() + k * self.r * k.transpose())
    }

    /// Applies `δx = K δy`, corrects the nominal state, resets the error to zero.
    pub fn apply(&self, fs: &FilterState, k: &SMatrix<f64, 15, M>) -> FilterState {
        let dx = ErrorState(k * self.residual);
        FilterState {
            nominal: correct_nominal(&fs.nominal, &dx),
            p: self.joseph(&fs.p.0, k),
            t: fs.t,
        }
    }
}

/// GNSS position measurement against the current nominal state.
pub fn gnss_measurement(state: &NavState, fix: &GnssFix, r: &Matrix3<f64>) -> Measurement<3> {
    let mut h = SMatrix::<f64, 3, 15>::zeros();
    h.fixed_view_mut::<3, 3>(0, slot::POS)
        .copy_from(&Matrix3::identity());
    Measurement {
        residual: state.p_ned - fix.p_ned,
        h,
        r: *r,
    }
}

/// Standard GNSS position update.
pub fn gnss_update(fs: &FilterState, fix: &GnssFix, cfg: &FilterConfig) -> Result<FilterState> {
    if !fix.p_ned.iter().all(|v| v.is_finite()) {
        return Err(NavError::NonFinite("GNSS fix"));
    }
    let meas = gnss_measurement(&fs.nominal, fix, &cfg.r_gnss);
    let k = meas.gain(&fs.p.0)?;
    Ok(meas.apply(fs, &k))
}
