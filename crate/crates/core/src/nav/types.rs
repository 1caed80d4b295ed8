use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::attitude::euler_rate_matrix;
use super::slot;
use crate::{NavError, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec15 = SVector<f64, 15>;
pub type Mat15 = SMatrix<f64, 15, 15>;

/// Pitch closer than this to ±π/2 is rejected by the Euler parameterization.
const GIMBAL_MARGIN: f64 = 1e-6;

/// One IMU epoch: specific force and angular rate in the body frame.
///
/// A sample stamped `t` describes the interval that ends at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force, m/s².
    pub f_b: Vec3,
    /// Angular rate, rad/s.
    pub w_b: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, f_b: Vec3, w_b: Vec3) -> Self {
        Self { t, f_b, w_b }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.f_b.iter().all(|v| v.is_finite())
            && self.w_b.iter().all(|v| v.is_finite())
    }
}

/// GNSS position fix in the local NED frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub t: f64,
    pub p_ned: Vec3,
    /// Per-axis standard deviation, m.
    pub sigma: Vec3,
}

impl GnssFix {
    pub fn new(t: f64, p_ned: Vec3, sigma: Vec3) -> Result<Self> {
        if !(t.is_finite() && p_ned.iter().all(|v| v.is_finite())) {
            return Err(NavError::NonFinite("GNSS fix"));
        }
        if sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(NavError::InvalidSpec(format!(
                "GNSS sigma must be non-negative, got {sigma:?}"
            )));
        }
        Ok(Self { t, p_ned, sigma })
    }
}

/// Nominal navigation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub p_ned: Vec3,
    pub v_ned: Vec3,
    /// Rotation from body to NED.
    pub att: UnitQuaternion<f64>,
    /// Accelerometer bias, m/s².
    pub b_a: Vec3,
    /// Gyro bias, rad/s.
    pub b_g: Vec3,
}

impl Default for NavState {
    fn default() -> Self {
        Self {
            p_ned: Vec3::zeros(),
            v_ned: Vec3::zeros(),
            att: UnitQuaternion::identity(),
            b_a: Vec3::zeros(),
            b_g: Vec3::zeros(),
        }
    }
}

impl NavState {
    pub fn new(p_ned: Vec3, v_ned: Vec3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            p_ned,
            v_ned,
            att: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            ..Self::default()
        }
    }

    /// `T_b^n`.
    pub fn body_to_nav(&self) -> Matrix3<f64> {
        *self.att.to_rotation_matrix().matrix()
    }

    /// `[roll, pitch, yaw]`, radians.
    pub fn euler(&self) -> Vec3 {
        let (r, p, y) = self.att.euler_angles();
        Vec3::new(r, p, y)
    }

    pub fn roll(&self) -> f64 {
        self.euler().x
    }

    pub fn pitch(&self) -> f64 {
        self.euler().y
    }

    /// Height above the origin, `-p_down`.
    pub fn altitude(&self) -> f64 {
        -self.p_ned.z
    }

    /// Velocity in the body frame, `T_n^b v^n`.
    pub fn body_velocity(&self) -> Vec3 {
        self.att.inverse_transform_vector(&self.v_ned)
    }

    pub fn is_finite(&self) -> bool {
        self.p_ned.iter().all(|v| v.is_finite())
            && self.v_ned.iter().all(|v| v.is_finite())
            && self.att.coords.iter().all(|v| v.is_finite())
            && self.b_a.iter().all(|v| v.is_finite())
            && self.b_g.iter().all(|v| v.is_finite())
    }
}

/// Error-state vector `[δp, δv, ε, δb_a, δb_g]`.
///
/// `δp` and `δv` are estimate minus truth; `ε` is the NED-frame attitude error
/// with `T̂ = (I + [ε]×) T`; bias errors are truth minus estimate, so a
/// correction adds them back.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState(pub Vec15);

impl ErrorState {
    pub fn zero() -> Self {
        Self(Vec15::zeros())
    }

    pub fn dp(&self) -> Vec3 {
        self.0.fixed_rows::<3>(slot::POS).into_owned()
    }

    pub fn dv(&self) -> Vec3 {
        self.0.fixed_rows::<3>(slot::VEL).into_owned()
    }

    pub fn eps(&self) -> Vec3 {
        self.0.fixed_rows::<3>(slot::ATT).into_owned()
    }

    pub fn dba(&self) -> Vec3 {
        self.0.fixed_rows::<3>(slot::ACC_BIAS).into_owned()
    }

    pub fn dbg(&self) -> Vec3 {
        self.0.fixed_rows::<3>(slot::GYRO_BIAS).into_owned()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// 15×15 error-state covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance(pub Mat15);

impl Covariance {
    pub fn from_diagonal(diag: &Vec15) -> Self {
        Self(Mat15::from_diagonal(diag))
    }

    pub fn symmetrized(m: Mat15) -> Self {
        Self((m + m.transpose()) * 0.5)
    }

    pub fn matrix(&self) -> &Mat15 {
        &self.0
    }

    pub fn asymmetry(&self) -> f64 {
        (self.0 - self.0.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.symmetric_eigenvalues().min()
    }
}

/// Full-state parameterization used by the projection:
/// `[p_n, p_e, h, v_n, v_e, v_d, roll, pitch, yaw, b_a, b_g]` with `h = -p_down`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector15(pub Vec15);

impl StateVector15 {
    pub fn as_vector(&self) -> &Vec15 {
        &self.0
    }
}

pub fn to_state_vector(state: &NavState) -> Result<StateVector15> {
    if !state.is_finite() {
        return Err(NavError::NonFinite("navigation state"));
    }
    let e = state.euler();
    if std::f64::consts::FRAC_PI_2 - e.y.abs() < GIMBAL_MARGIN {
        return Err(NavError::GimbalLock { pitch: e.y });
    }
    let mut x = Vec15::zeros();
    x[0] = state.p_ned.x;
    x[1] = state.p_ned.y;
    x[slot::HEIGHT] = -state.p_ned.z;
    x.fixed_rows_mut::<3>(slot::VEL).copy_from(&state.v_ned);
    x.fixed_rows_mut::<3>(slot::ATT).copy_from(&e);
    x.fixed_rows_mut::<3>(slot::ACC_BIAS).copy_from(&state.b_a);
    x.fixed_rows_mut::<3>(slot::GYRO_BIAS).copy_from(&state.b_g);
    Ok(StateVector15(x))
}

/// Inverse of [`to_state_vector`]. The quaternion sign is chosen to lie in the
/// same hemisphere as `reference.att`.
pub fn from_state_vector(x15: &StateVector15, reference: &NavState) -> Result<NavState> {
    let x = &x15.0;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(NavError::NonFinite("state vector"));
    }
    if std::f64::consts::FRAC_PI_2 - x[slot::PITCH].abs() < GIMBAL_MARGIN {
        return Err(NavError::GimbalLock { pitch: x[slot::PITCH] });
    }
    let mut att =
        UnitQuaternion::from_euler_angles(x[slot::ROLL], x[slot::PITCH], x[slot::YAW]);
    if att.coords.dot(&reference.att.coords) < 0.0 {
        att = UnitQuaternion::new_unchecked(-att.into_inner());
    }
    Ok(NavState {
        p_ned: Vec3::new(x[0], x[1], -x[slot::HEIGHT]),
        v_ned: x.fixed_rows::<3>(slot::VEL).into_owned(),
        att,
        b_a: x.fixed_rows::<3>(slot::ACC_BIAS).into_owned(),
        b_g: x.fixed_rows::<3>(slot::GYRO_BIAS).into_owned(),
    })
}

/// Sensitivity of the state vector to an error-state correction applied by
/// [`crate::eskf::correct_nominal`]: `x15(correct(x, δx)) ≈ x15(x) + M δx`.
///
/// Also maps the error-state covariance into the state-vector layout as `M P Mᵀ`.
pub fn correction_jacobian(state: &NavState) -> Mat15 {
    let mut m = Mat15::zeros();
    m[(0, 0)] = -1.0;
    m[(1, 1)] = -1.0;
    m[(2, 2)] = 1.0;
    for i in 0..3 {
        m[(slot::VEL + i, slot::VEL + i)] = -1.0;
        m[(slot::ACC_BIAS + i, slot::ACC_BIAS + i)] = 1.0;
        m[(slot::GYRO_BIAS + i, slot::GYRO_BIAS + i)] = 1.0;
    }
    // A correction rotates by -ε in NED, i.e. by -Tᵀε in the body frame.
    let e = state.euler();
    let att_block = -euler_rate_matrix(e.x, e.y) * state.body_to_nav().transpose();
    m.fixed_view_mut::<3, 3>(slot::ATT, slot::ATT).copy_from(&att_block);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_state_maps_to_zero_vector() {
        let x = to_state_vector(&NavState::default()).unwrap();
        assert_eq!(x.0, Vec15::zeros());
    }

    #[test]
    fn altitude_slot_is_negated_down() {
        let s = NavState {
            p_ned: Vec3::new(0.0, 0.0, -100.0),
            ..NavState::default()
        };
        assert_eq!(to_state_vector(&s).unwrap().0[slot::HEIGHT], 100.0);
    }

    #[test]
    fn gimbal_lock_rejected() {
        let s = NavState::new(Vec3::zeros(), Vec3::zeros(), 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        assert!(matches!(to_state_vector(&s), Err(NavError::GimbalLock { .. })));
        let mut x = Vec15::zeros();
        x[slot::PITCH] = -std::f64::consts::FRAC_PI_2 + 1e-8;
        assert!(from_state_vector(&StateVector15(x), &NavState::default()).is_err());
    }

    #[test]
    fn gnss_fix_rejects_negative_sigma() {
        assert!(GnssFix::new(0.0, Vec3::zeros(), Vec3::new(1.0, -1.0, 1.0)).is_err());
        assert!(GnssFix::new(0.0, Vec3::zeros(), Vec3::new(1.0, f64::NAN, 1.0)).is_err());
        assert!(GnssFix::new(0.0, Vec3::zeros(), Vec3::zeros()).is_ok());
        assert!(GnssFix::new(0.0, Vec3::zeros(), Vec3::repeat(3.5)).is_ok());
    }

    fn arb_state() -> impl Strategy<Value = NavState> {
        let deg80 = 80f64.to_radians();
        (
            prop::array::uniform3(-1e4f64..1e4),
            prop::array::uniform3(-30f64..30.0),
            -3.1f64..3.1,
            -deg80..deg80,
            -3.1f64..3.1,
            prop::array::uniform3(-0.5f64..0.5),
            prop::array::uniform3(-0.01f64..0.01),
        )
            .prop_map(|(p, v, r, pi, y, ba, bg)| NavState {
                p_ned: Vec3::from(p),
                v_ned: Vec3::from(v),
                att: UnitQuaternion::from_euler_angles(r, pi, y),
                b_a: Vec3::from(ba),
                b_g: Vec3::from(bg),
            })
    }

    proptest! {
        #[test]
        fn state_vector_round_trip(s in arb_state()) {
            let back = from_state_vector(&to_state_vector(&s).unwrap(), &s).unwrap();
            prop_assert!((back.p_ned - s.p_ned).norm() < 1e-12);
            prop_assert!((back.v_ned - s.v_ned).norm() < 1e-12);
            prop_assert!((back.att.coords - s.att.coords).norm() < 1e-12);
            prop_assert!((back.b_a - s.b_a).norm() < 1e-12);
            prop_assert!((back.b_g - s.b_g).norm() < 1e-12);
        }
    }
}
