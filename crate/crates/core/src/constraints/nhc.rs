use nalgebra::{Matrix2, SMatrix, Vector2};

use crate::eskf::{FilterState, Measurement};
use crate::nav::{skew, slot, NavState};
use crate::Result;

/// (m/s)² on the lateral and vertical body velocity.
pub fn default_r_nhc() -> Matrix2<f64> {
    Matrix2::identity() * 0.05f64.powi(2)
}

/// Zero lateral and vertical body velocity as a pseudo-measurement.
///
/// The residual is rows 2 and 3 of `T_n^b vⁿ`; the sensitivity is the same
/// rows of `[0, T_n^b, T_n^b[vⁿ]×, 0, 0]`.
pub fn nhc_measurement(state: &NavState, r_nhc: &Matrix2<f64>) -> Measurement<2> {
    let tnb = state.body_to_nav().transpose();
    let vb = tnb * state.v_ned;
    let att = tnb * skew(&state.v_ned);
    let mut h = SMatrix::<f64, 2, 15>::zeros();
    for i in 0..2 {
        for k in 0..3 {
            h[(i, slot::VEL + k)] = tnb[(i + 1, k)];
            h[(i, slot::ATT + k)] = att[(i + 1, k)];
        }
    }
    Measurement {
        residual: Vector2::new(vb.y, vb.z),
        h,
        r: *r_nhc,
    }
}

/// One NHC update. A singular innovation covariance is returned as an error
/// so the caller can skip the epoch.
pub fn nhc_update(fs: &FilterState, r_nhc: &Matrix2<f64>) -> Result<FilterState> {
    let meas = nhc_measurement(&fs.nominal, r_nhc);
    let k = meas.gain(&fs.p.0)?;
    Ok(meas.apply(fs, &k))
}
