//! Dual-branch INS/GNSS navigation.
//!
//! A loosely coupled error-state EKF over a 15-element error vector
//! `[δp, δv, ε, δb_a, δb_g]`, aided by two independent branches:
//!
//! - an equality branch applying the non-holonomic constraint (zero lateral and
//!   vertical body velocity) as a pseudo-measurement,
//! - an inequality branch bounding height, roll, pitch and forward velocity,
//!   either by a covariance-weighted QP projection (no GNSS) or by optimizing the
//!   Kalman gain under the bounds (with GNSS).
//!
//! The two branch posteriors are merged per epoch by a variance-weighted, λ-biased
//! combination in [`fusion`]. The [`harness`] module provides synthetic
//! trajectories, GNSS corruption and outage simulation, the four filter variants
//! and error metrics.

pub mod constraints;
pub mod error;
pub mod eskf;
pub mod fusion;
pub mod harness;
pub mod nav;
pub mod qp;

pub use error::{NavError, Result};
