//! Frames, attitude algebra, strapdown mechanization and the navigation data
//! model shared by every filter branch.
//!
//! All quantities live in a local-level NED frame with constant gravity
//! `[0, 0, g]`. Attitude is a unit quaternion rotating body vectors into NED
//! (`T_b^n`); Euler angles are ZYX (yaw, pitch, roll) and are derived on demand.

mod attitude;
mod error_model;
mod mechanization;
mod types;

pub use attitude::{euler_rate_matrix, skew, wrap_angle};
pub use error_model::{
    error_dynamics, matrix_exp, process_noise, state_transition, ImuNoise, PhiMode,
};
pub use mechanization::{propagate_nominal, GRAVITY};
pub use types::{
    correction_jacobian, from_state_vector, to_state_vector, Covariance, ErrorState, GnssFix,
    ImuSample, Mat15, NavState, StateVector15, Vec15, Vec3,
};

/// Slot offsets of the 15-element error-state and state-vector layouts.
pub mod slot {
    pub const POS: usize = 0;
    pub const VEL: usize = 3;
    pub const ATT: usize = 6;
    pub const ACC_BIAS: usize = 9;
    pub const GYRO_BIAS: usize = 12;

    /// Altitude (`h = -p_down`) in the state vector, down position in the error state.
    pub const HEIGHT: usize = 2;
    pub const VEL_DOWN: usize = 5;
    pub const ROLL: usize = 6;
    pub const PITCH: usize = 7;
    pub const YAW: usize = 8;
}
