use serde::{Deserialize, Serialize};

use super::synth::TruthSample;
use crate::nav::{wrap_angle, NavState, Vec3};
use crate::{NavError, Result};

/// Estimate minus truth at one epoch. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochError {
    pub t: f64,
    pub pos: Vec3,
    pub vel: Vec3,
    pub roll: f64,
    pub pitch: f64,
}

impl EpochError {
    pub fn horizontal(&self) -> f64 {
        self.pos.xy().norm()
    }

    pub fn attitude(&self) -> f64 {
        self.roll.hypot(self.pitch)
    }
}

/// 95th percentiles of the absolute error norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub position: f64,
    pub velocity: f64,
    pub attitude: f64,
    pub horizontal: f64,
    pub vertical: f64,
}

/// RMS errors over a window. ARMSE covers roll and pitch only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub prmse: f64,
    pub vrmse: f64,
    pub armse: f64,
    pub h_prmse: f64,
    pub v_prmse: f64,
    pub p95: Percentiles,
    pub epochs: usize,
}

pub fn epoch_errors(est: &[(f64, NavState)], truth: &[TruthSample]) -> Result<Vec<EpochError>> {
    if est.len() != truth.len() {
        return Err(NavError::LengthMismatch {
            left: est.len(),
            right: truth.len(),
        });
    }
    est.iter()
        .zip(truth)
        .map(|((t, s), g)| {
            if (t - g.t).abs() > 1e-9 * t.abs().max(1.0) {
                return Err(NavError::InvalidLog(format!("estimate at t = {t} paired with truth at t = {}", g.t)));
            }
            let e = s.euler();
            Ok(EpochError {
                t: *t,
                pos: s.p_ned - g.p_ned,
                vel: s.v_ned - g.v_ned,
                roll: wrap_angle(e.x - g.euler.x),
                pitch: wrap_angle(e.y - g.euler.y),
            })
        })
        .collect()
}

fn rms(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    (values.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Linear-interpolation percentile of unsorted values, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn summarize(errors: &[EpochError]) -> Result<MetricsReport> {
    if errors.is_empty() {
        return Err(NavError::InvalidSpec("no epochs to score".into()));
    }
    let n = errors.len();
    let pos: Vec<f64> = errors.iter().map(|e| e.pos.norm()).collect();
    let vel: Vec<f64> = errors.iter().map(|e| e.vel.norm()).collect();
    let att: Vec<f64> = errors.iter().map(EpochError::attitude).collect();
    let hor: Vec<f64> = errors.iter().map(EpochError::horizontal).collect();
    let ver: Vec<f64> = errors.iter().map(|e| e.pos.z.abs()).collect();
    Ok(MetricsReport {
        prmse: rms(pos.iter().copied(), n),
        vrmse: rms(vel.iter().copied(), n),
        armse: rms(att.iter().copied(), n),
        h_prmse: rms(hor.iter().copied(), n),
        v_prmse: rms(ver.iter().copied(), n),
        p95: Percentiles {
            position: percentile(&pos, 0.95),
            velocity: percentile(&vel, 0.95),
            attitude: percentile(&att, 0.95),
            horizontal: percentile(&hor, 0.95),
            vertical: percentile(&ver, 0.95),
        },
        epochs: n,
    })
}

pub fn compute_metrics(est: &[(f64, NavState)], truth: &[TruthSample]) -> Result<(MetricsReport, Vec<EpochError>)> {
    let errors = epoch_errors(est, truth)?;
    Ok((summarize(&errors)?, errors))
}
