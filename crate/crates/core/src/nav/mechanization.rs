use nalgebra::UnitQuaternion;

use super::{ImuSample, NavState, Vec3};
use crate::{NavError, Result};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

/// One bias-corrected strapdown step in a flat local NED frame.
///
/// Attitude advances by the quaternion exponential of `(w_b - b_g) dt`; the
/// specific force is rotated with the mid-interval attitude, gravity `[0, 0, g]`
/// is added, and position integrates the trapezoidal mean velocity. Earth rate
/// and transport rate are ignored.
pub fn propagate_nominal(
    state: &NavState,
    imu: &ImuSample,
    dt: f64,
    gravity: f64,
) -> Result<NavState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(NavError::InvalidSpec(format!("propagation step must be positive, got {dt}")));
    }
    if !imu.is_finite() {
        return Err(NavError::NonFinite("IMU sample"));
    }
    if !(state.is_finite() && gravity.is_finite()) {
        return Err(NavError::NonFinite("navigation state"));
    }

    let rate = imu.w_b - state.b_g;
    let half = UnitQuaternion::from_scaled_axis(rate * (0.5 * dt));
    let mid = state.att * half;
    let mut att = mid * half;
    att.renormalize();

    let accel = mid.transform_vector(&(imu.f_b - state.b_a)) + Vec3::new(0.0, 0.0, gravity);
    let v_ned = state.v_ned + accel * dt;
    let p_ned = state.p_ned + (state.v_ned + v_ned) * (0.5 * dt);

    Ok(NavState {
        p_ned,
        v_ned,
        att,
        b_a: state.b_a,
        b_g: state.b_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rest_sample(t: f64) -> ImuSample {
        ImuSample::new(t, Vec3::new(0.0, 0.0, -GRAVITY), Vec3::zeros())
    }

    #[test]
    fn static_equilibrium_is_exact() {
        let s0 = NavState::default();
        let s1 = propagate_nominal(&s0, &rest_sample(0.01), 0.01, GRAVITY).unwrap();
        assert_eq!(s1.p_ned, s0.p_ned);
        assert_eq!(s1.v_ned, s0.v_ned);
        assert_eq!(s1.att, s0.att);
    }

    #[test]
    fn static_equilibrium_holds_over_many_steps() {
        let mut s = NavState::new(Vec3::new(5.0, -3.0, -20.0), Vec3::zeros(), 0.05, -0.03, 1.2);
        // Specific force that balances gravity for this tilted attitude.
        let f_b = s.att.inverse_transform_vector(&Vec3::new(0.0, 0.0, -GRAVITY));
        let start = s;
        for k in 1..=1000 {
            s = propagate_nominal(&s, &ImuSample::new(k as f64 * 0.01, f_b, Vec3::zeros()), 0.01, GRAVITY)
                .unwrap();
        }
        assert!((s.p_ned - start.p_ned).norm() < 1e-9);
        assert!((s.v_ned - start.v_ned).norm() < 1e-9);
        assert!(s.att.angle_to(&start.att) < 1e-9);
    }

    #[test]
    fn constant_forward_acceleration() {
        let imu = ImuSample::new(1.0, Vec3::new(1.0, 0.0, -GRAVITY), Vec3::zeros());
        let s = propagate_nominal(&NavState::default(), &imu, 1.0, GRAVITY).unwrap();
        assert!((s.v_ned - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((s.p_ned - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_axis_yaw_rotation() {
        let imu = ImuSample::new(1.0, Vec3::new(0.0, 0.0, -GRAVITY), Vec3::new(0.0, 0.0, FRAC_PI_2));
        let s = propagate_nominal(&NavState::default(), &imu, 1.0, GRAVITY).unwrap();
        let e = s.euler();
        assert!((e.z - FRAC_PI_2).abs() < 1e-9);
        assert!(e.x.abs() < 1e-9 && e.y.abs() < 1e-9);
        assert!(s.v_ned.norm() < 1e-12);
    }

    #[test]
    fn biases_are_removed() {
        let mut s = NavState::default();
        s.b_a = Vec3::new(0.1, -0.2, 0.05);
        s.b_g = Vec3::new(0.01, 0.0, -0.02);
        let imu = ImuSample::new(0.01, Vec3::new(0.1, -0.2, 0.05 - GRAVITY), s.b_g);
        let s1 = propagate_nominal(&s, &imu, 0.01, GRAVITY).unwrap();
        assert!(s1.v_ned.norm() < 1e-15);
        assert!(s1.att.angle() < 1e-15);
    }

    #[test]
    fn quaternion_stays_normalized() {
        let mut s = NavState::default();
        for k in 1..=10_000 {
            let imu = ImuSample::new(k as f64 * 0.01, Vec3::new(0.3, 0.1, -GRAVITY), Vec3::new(0.4, -0.7, 1.3));
            s = propagate_nominal(&s, &imu, 0.01, GRAVITY).unwrap();
            assert!((s.att.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = NavState::default();
        assert!(propagate_nominal(&s, &rest_sample(0.0), 0.0, GRAVITY).is_err());
        let bad = ImuSample::new(0.01, Vec3::new(f64::NAN, 0.0, 0.0), Vec3::zeros());
        assert!(matches!(
            propagate_nominal(&s, &bad, 0.01, GRAVITY),
            Err(NavError::NonFinite(_))
        ));
    }
}
