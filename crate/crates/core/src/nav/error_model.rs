use nalgebra::{Matrix3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::attitude::skew;
use super::{slot, ImuSample, Mat15, NavState, Vec3};
use crate::{NavError, Result};

/// How `Φ = exp(F dt)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiMode {
    /// Scaled and squared Taylor series.
    #[default]
    Exact,
    /// `I + F dt`.
    FirstOrder,
}

/// IMU noise model, given as standard-deviation densities per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoise {
    /// Accelerometer white noise, (m/s²)/√Hz.
    pub accel_noise: Vec3,
    /// Gyro white noise, (rad/s)/√Hz.
    pub gyro_noise: Vec3,
    /// Accelerometer bias random walk, (m/s²)/√s.
    pub accel_bias_walk: Vec3,
    /// Gyro bias random walk, (rad/s)/√s.
    pub gyro_bias_walk: Vec3,
}

impl ImuNoise {
    pub fn zero() -> Self {
        Self {
            accel_noise: Vec3::zeros(),
            gyro_noise: Vec3::zeros(),
            accel_bias_walk: Vec3::zeros(),
            gyro_bias_walk: Vec3::zeros(),
        }
    }

    pub fn isotropic(accel: f64, gyro: f64, accel_walk: f64, gyro_walk: f64) -> Self {
        Self {
            accel_noise: Vec3::repeat(accel),
            gyro_noise: Vec3::repeat(gyro),
            accel_bias_walk: Vec3::repeat(accel_walk),
            gyro_bias_walk: Vec3::repeat(gyro_walk),
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("accel_noise", &self.accel_noise),
            ("gyro_noise", &self.gyro_noise),
            ("accel_bias_walk", &self.accel_bias_walk),
            ("gyro_bias_walk", &self.gyro_bias_walk),
        ];
        for (name, v) in fields {
            for &value in v.iter() {
                if !value.is_finite() {
                    return Err(NavError::NonFinite("IMU noise density"));
                }
                if value < 0.0 {
                    return Err(NavError::NegativeDensity { name, value });
                }
            }
        }
        Ok(())
    }
}

/// Continuous-time error dynamics `F` for the layout `[δp, δv, ε, δb_a, δb_g]`.
///
/// `δṗ = δv`, `δv̇ = -[T f]× ε + T δb_a`, `ε̇ = T δb_g`. The bias terms enter
/// with a positive sign because bias errors are defined as truth minus estimate.
pub fn error_dynamics(state: &NavState, imu: &ImuSample) -> Mat15 {
    let t = state.body_to_nav();
    let f_n = t * (imu.f_b - state.b_a);
    let mut f = Mat15::zeros();
    f.fixed_view_mut::<3, 3>(slot::POS, slot::VEL)
        .copy_from(&Matrix3::identity());
    f.fixed_view_mut::<3, 3>(slot::VEL, slot::ATT)
        .copy_from(&(-skew(&f_n)));
    f.fixed_view_mut::<3, 3>(slot::VEL, slot::ACC_BIAS).copy_from(&t);
    f.fixed_view_mut::<3, 3>(slot::ATT, slot::GYRO_BIAS).copy_from(&t);
    f
}

/// `Φ = exp(F dt)` with `F` evaluated at the start of the interval.
pub fn state_transition(state: &NavState, imu: &ImuSample, dt: f64, mode: PhiMode) -> Result<Mat15> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(NavError::InvalidSpec(format!("transition step must be non-negative, got {dt}")));
    }
    if !imu.is_finite() || !state.is_finite() {
        return Err(NavError::NonFinite("state transition input"));
    }
    let fdt = error_dynamics(state, imu) * dt;
    Ok(match mode {
        PhiMode::Exact => matrix_exp(&fdt),
        PhiMode::FirstOrder => Mat15::identity() + fdt,
    })
}

fn inf_norm(m: &Mat15) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring a truncated Taylor series.
pub fn matrix_exp(a: &Mat15) -> Mat15 {
    const TERM_TOL: f64 = 1e-13;
    let norm = inf_norm(a);
    let mut squarings = 0u32;
    while norm / 2f64.powi(squarings as i32) > 0.5 && squarings < 60 {
        squarings += 1;
    }
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = Mat15::identity();
    let mut sum = Mat15::identity();
    for k in 1..=40 {
        term = term * scaled / k as f64;
        sum += term;
        if inf_norm(&term) < TERM_TOL {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Discrete process noise `G Q Gᵀ dt`.
///
/// Accelerometer noise maps into the velocity block and gyro noise into the
/// attitude block, both rotated into NED; bias random walks fill the bias blocks.
pub fn process_noise(noise: &ImuNoise, att: &UnitQuaternion<f64>, dt: f64) -> Result<Mat15> {
    noise.validate()?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(NavError::InvalidSpec(format!("process-noise step must be non-negative, got {dt}")));
    }
    let t = *att.to_rotation_matrix().matrix();
    let rotate = |d: &Vec3| t * Matrix3::from_diagonal(&d.component_mul(d)) * t.transpose();
    let mut q = Mat15::zeros();
    q.fixed_view_mut::<3, 3>(slot::VEL, slot::VEL)
        .copy_from(&rotate(&noise.accel_noise));
    q.fixed_view_mut::<3, 3>(slot::ATT, slot::ATT)
        .copy_from(&rotate(&noise.gyro_noise));
    q.fixed_view_mut::<3, 3>(slot::ACC_BIAS, slot::ACC_BIAS)
        .copy_from(&Matrix3::from_diagonal(&noise.accel_bias_walk.component_mul(&noise.accel_bias_walk)));
    q.fixed_view_mut::<3, 3>(slot::GYRO_BIAS, slot::GYRO_BIAS)
        .copy_from(&Matrix3::from_diagonal(&noise.gyro_bias_walk.component_mul(&noise.gyro_bias_walk)));
    Ok(q * dt)
}
