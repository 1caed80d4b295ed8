use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use super::bounds::{derive_bounds, AltitudeMode};
use super::metrics::{summarize, EpochError, MetricsReport};
use super::synth::{corrupt_gnss, TrajectoryLog};
use crate::constraints::{
    inequality_branch_step_detailed, nhc_branch_step, BranchEstimate, BranchId, EnvelopeBounds, InequalityEvent,
};
use crate::eskf::{gnss_update, predict, FilterConfig, FilterState};
use crate::fusion::{fuse, FusionRule, LambdaVector};
use crate::nav::{Covariance, GnssFix, ImuNoise, Mat15, NavState, PhiMode, Vec15, Vec3, GRAVITY};
use crate::{NavError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "EKF")]
    Ekf,
    #[serde(rename = "NHCEKF")]
    NhcEkf,
    #[serde(rename = "INQEKF")]
    InqEkf,
    #[serde(rename = "DUAL")]
    Dual,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ekf, Variant::NhcEkf, Variant::InqEkf, Variant::Dual];
}

impl FromStr for Variant {
    type Err = NavError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EKF" => Ok(Variant::Ekf),
            "NHCEKF" => Ok(Variant::NhcEkf),
            "INQEKF" => Ok(Variant::InqEkf),
            "DUAL" => Ok(Variant::Dual),
            other => Err(NavError::InvalidSpec(format!("unknown variant '{other}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ekf => "EKF",
            Variant::NhcEkf => "NHCEKF",
            Variant::InqEkf => "INQEKF",
            Variant::Dual => "DUAL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FullGnss,
    GnssDenied,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::FullGnss, Scenario::GnssDenied];
}

impl FromStr for Scenario {
    type Err = NavError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full-gnss" | "full" => Ok(Scenario::FullGnss),
            "gnss-denied" | "denied" => Ok(Scenario::GnssDenied),
            other => Err(NavError::InvalidSpec(format!("unknown scenario '{other}'"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::FullGnss => "full-gnss",
            Scenario::GnssDenied => "gnss-denied",
        })
    }
}

/// Filter noise model and initial uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterTuning {
    pub accel_noise: f64,
    pub gyro_noise: f64,
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
    pub init_vel_sigma: f64,
    /// rad
    pub init_att_sigma: f64,
    pub init_yaw_sigma: f64,
    pub init_accel_bias_sigma: f64,
    pub init_gyro_bias_sigma: f64,
    /// Lateral and vertical body-velocity noise of the NHC pseudo-measurement, m/s.
    pub nhc_sigma: f64,
    pub phi_mode: PhiMode,
}

impl Default for FilterTuning {
    fn default() -> Self {
        Self {
            accel_noise: 0.01,
            gyro_noise: 1e-3,
            accel_bias_walk: 1e-4,
            gyro_bias_walk: 1e-5,
            init_vel_sigma: 0.3,
            init_att_sigma: 0.5f64.to_radians(),
            init_yaw_sigma: 2f64.to_radians(),
            init_accel_bias_sigma: 0.1,
            init_gyro_bias_sigma: 1e-3,
            nhc_sigma: 0.05,
            phi_mode: PhiMode::Exact,
        }
    }
}

/// Deterministic offsets applied to the truth when the filter starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitErrors {
    pub vel: Vec3,
    /// (roll, pitch, yaw) in rad.
    pub att: Vec3,
}

impl Default for InitErrors {
    fn default() -> Self {
        Self {
            vel: Vec3::new(0.1, -0.1, 0.05),
            att: Vec3::new(0.2f64.to_radians(), -0.2f64.to_radians(), 1f64.to_radians()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub variant: Variant,
    pub gnss_noise_std: f64,
    pub gnss_rate: f64,
    pub init_s: f64,
    pub outage_s: f64,
    pub bounds_scale: f64,
    pub v_max: f64,
    pub seed: u64,
    pub altitude_mode: AltitudeMode,
    pub fusion_rule: FusionRule,
    pub tuning: FilterTuning,
    pub init_errors: InitErrors,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, variant: Variant, seed: u64) -> Self {
        Self {
            scenario,
            variant,
            gnss_noise_std: 3.5,
            gnss_rate: 1.0,
            init_s: 60.0,
            outage_s: 30.0,
            bounds_scale: 2.0,
            v_max: 50.0 / 3.6,
            seed,
            altitude_mode: AltitudeMode::Relative,
            fusion_rule: FusionRule::Normalized,
            tuning: FilterTuning::default(),
            init_errors: InitErrors::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gnss_rate", self.gnss_rate),
            ("init_s", self.init_s),
            ("outage_s", self.outage_s),
            ("bounds_scale", self.bounds_scale),
            ("v_max", self.v_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NavError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gnss_noise_std >= 0.0 && self.gnss_noise_std.is_finite()) {
            return Err(NavError::InvalidSpec(format!(
                "gnss_noise_std must be non-negative, got {}",
                self.gnss_noise_std
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, log: &TrajectoryLog) -> Result<()> {
        self.validate()?;
        if !log.has_truth() {
            return Err(NavError::InvalidLog("experiments need a log with ground truth".into()));
        }
        if self.scenario == Scenario::GnssDenied && log.meta.duration + 1e-9 < self.init_s + self.outage_s {
            return Err(NavError::InvalidSpec(format!(
                "gnss-denied needs {} s of data, log has {} s",
                self.init_s + self.outage_s,
                log.meta.duration
            )));
        }
        Ok(())
    }

    /// Smallest R the filter uses, so noise-free fixes stay well-posed.
    pub const MIN_GNSS_SIGMA: f64 = 1e-3;

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let t = &self.tuning;
        let noise = ImuNoise::isotropic(t.accel_noise, t.gyro_noise, t.accel_bias_walk, t.gyro_bias_walk);
        let sigma = self.gnss_noise_std.max(Self::MIN_GNSS_SIGMA);
        let r_gnss = Matrix3::identity() * sigma * sigma;
        let mut d = Vec15::zeros();
        let pos = sigma.max(0.1).powi(2);
        let att = t.init_att_sigma.powi(2);
        let per_slot = [
            pos,
            pos,
            pos,
            t.init_vel_sigma.powi(2),
            t.init_vel_sigma.powi(2),
            t.init_vel_sigma.powi(2),
            att,
            att,
            t.init_yaw_sigma.powi(2),
        ];
        for (j, v) in per_slot.iter().enumerate() {
            d[j] = *v;
        }
        for j in 9..12 {
            d[j] = t.init_accel_bias_sigma.powi(2);
            d[j + 3] = t.init_gyro_bias_sigma.powi(2);
        }
        let mut cfg = FilterConfig::new(noise, r_gnss, Mat15::from_diagonal(&d))?;
        cfg.phi_mode = t.phi_mode;
        cfg.gravity = GRAVITY;
        Ok(cfg)
    }

    pub fn r_nhc(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.tuning.nhc_sigma.powi(2)
    }
}

/// Seed for the GNSS noise stream, distinct from the IMU stream of the same seed.
pub fn gnss_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x6A09_E667_F3BC_C908
}

/// Event tallies over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub epochs: usize,
    pub gnss_updates: usize,
    /// Fixes consumed at or after outage onset. Always 0 for a correct run.
    pub fixes_in_outage: usize,
    pub nhc_skipped: usize,
    pub projections: usize,
    pub gain_constrained: usize,
    pub gain_fallbacks: usize,
    pub gain_residual_violations: usize,
    pub fusion_guard: usize,
}

/// Per-epoch output. `w_inq` is present for DUAL only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochOutput {
    pub t: f64,
    pub state: NavState,
    pub w_inq: Option<Vec15>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub variant: Variant,
    pub scenario: Scenario,
    pub epochs: Vec<EpochOutput>,
    /// Errors over the scored window.
    pub errors: Vec<EpochError>,
    pub metrics: MetricsReport,
    pub counters: RunCounters,
    pub bounds: EnvelopeBounds,
    /// Scored interval `[start, end]`, s from log start.
    pub window: (f64, f64),
    /// Largest constraint violation of the inequality branch (−∞ if unused).
    pub max_inq_violation: f64,
}

/// Epochs carrying a fix: each fix lands on the IMU epoch nearest its timestamp.
fn fixes_by_epoch(log: &TrajectoryLog, fixes: Vec<GnssFix>) -> BTreeMap<usize, GnssFix> {
    let t0 = log.imu[0].t;
    let last = log.imu.len() - 1;
    let mut out = BTreeMap::new();
    for f in fixes {
        let k = ((f.t - t0) * log.meta.imu_rate).round().clamp(0.0, last as f64) as usize;
        out.entry(k).or_insert(f);
    }
    out
}

fn initial_state(log: &TrajectoryLog, first_fix: Option<&GnssFix>, e: &InitErrors) -> NavState {
    let g = &log.truth[0];
    let p = first_fix.map_or(g.p_ned, |f| f.p_ned);
    NavState::new(p, g.v_ned + e.vel, g.euler.x + e.att.x, g.euler.y + e.att.y, g.euler.z + e.att.z)
}

pub fn run_variant(log: &TrajectoryLog, spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate_for(log)?;
    let cfg = spec.filter_config()?;
    let r_nhc = spec.r_nhc();
    let t0 = log.imu[0].t;
    let denied = spec.scenario == Scenario::GnssDenied;
    let outage_start = t0 + spec.init_s;
    let end_t = if denied { outage_start + spec.outage_s } else { f64::INFINITY };
    let n = log
        .imu
        .iter()
        .take_while(|s| s.t <= end_t + 1e-9)
        .count();
    let truth = &log.truth[..n];

    let fixes = corrupt_gnss(truth, spec.gnss_noise_std, spec.gnss_rate, gnss_seed(spec.seed))?;
    let mut by_epoch = fixes_by_epoch(log, fixes);
    if denied {
        by_epoch.retain(|_, f| f.t < outage_start);
    }
    let bounds = derive_bounds(truth, spec.bounds_scale, spec.v_max, spec.altitude_mode)?;

    let x0 = initial_state(log, by_epoch.get(&0), &spec.init_errors);
    let p0 = Covariance(cfg.p0);
    let mut main = FilterState::new(x0, p0, t0);
    let mut inq = main;
    let mut counters = RunCounters::default();
    let mut max_inq_violation = f64::NEG_INFINITY;
    let mut epochs = Vec::with_capacity(n);
    epochs.push(EpochOutput {
        t: t0,
        state: x0,
        w_inq: None,
    });

    for k in 1..n {
        let imu = &log.imu[k];
        let fix = by_epoch.get(&k);
        if let Some(f) = fix {
            counters.gnss_updates += 1;
            if denied && f.t >= outage_start {
                counters.fixes_in_outage += 1;
            }
        }
        let mut w_inq = None;
        let state = match spec.variant {
            Variant::Ekf => {
                main = predict(&main, imu, &cfg)?;
                if let Some(f) = fix {
                    main = gnss_update(&main, f, &cfg)?;
                }
                main.nominal
            }
            Variant::NhcEkf => {
                let (next, skipped) = nhc_branch_step(&main, imu, fix, &r_nhc, &cfg)?;
                counters.nhc_skipped += usize::from(skipped);
                main = next;
                main.nominal
            }
            Variant::InqEkf => {
                inq = step_inq(&inq, imu, fix, &bounds, &cfg, &mut counters, &mut max_inq_violation)?;
                inq.nominal
            }
            Variant::Dual => {
                let (next, skipped) = nhc_branch_step(&main, imu, fix, &r_nhc, &cfg)?;
                counters.nhc_skipped += usize::from(skipped);
                main = next;
                inq = step_inq(&inq, imu, fix, &bounds, &cfg, &mut counters, &mut max_inq_violation)?;
                let lam = if denied && imu.t >= outage_start {
                    LambdaVector::gnss_denied()
                } else {
                    LambdaVector::full_gnss()
                };
                let b1 = BranchEstimate::from_filter(&main, BranchId::Nhc);
                let b2 = BranchEstimate::from_filter(&inq, BranchId::Inq);
                match fuse(&b1, &b2, &lam, spec.fusion_rule) {
                    Ok(f) => {
                        w_inq = Some(f.w_inq);
                        f.state
                    }
                    Err(NavError::AttitudeDivergence { .. }) => {
                        counters.fusion_guard += 1;
                        main.nominal
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if !state.is_finite() {
            return Err(NavError::NonFinite("filter output"));
        }
        epochs.push(EpochOutput { t: imu.t, state, w_inq });
    }
    counters.epochs = epochs.len();

    let window_start = if denied { outage_start } else { t0 };
    let mut errors = Vec::new();
    for (e, g) in epochs.iter().zip(truth) {
        if e.t + 1e-9 < window_start {
            continue;
        }
        let s = &e.state;
        let eul = s.euler();
        errors.push(EpochError {
            t: e.t,
            pos: s.p_ned - g.p_ned,
            vel: s.v_ned - g.v_ned,
            roll: crate::nav::wrap_angle(eul.x - g.euler.x),
            pitch: crate::nav::wrap_angle(eul.y - g.euler.y),
        });
    }
    let metrics = summarize(&errors)?;
    let window = (window_start - t0, epochs[epochs.len() - 1].t - t0);
    Ok(RunOutput {
        variant: spec.variant,
        scenario: spec.scenario,
        epochs,
        errors,
        metrics,
        counters,
        bounds,
        window,
        max_inq_violation,
    })
}

fn step_inq(
    fs: &FilterState,
    imu: &crate::nav::ImuSample,
    fix: Option<&GnssFix>,
    bounds: &EnvelopeBounds,
    cfg: &FilterConfig,
    counters: &mut RunCounters,
    max_violation: &mut f64,
) -> Result<FilterState> {
    let step = inequality_branch_step_detailed(fs, imu, fix, bounds, cfg)?;
    match step.event {
        InequalityEvent::Inside | InequalityEvent::GainUnconstrained => {}
        InequalityEvent::Projected { .. } => counters.projections += 1,
        InequalityEvent::GainConstrained { residual_violation } => {
            counters.gain_constrained += 1;
            counters.gain_residual_violations += usize::from(residual_violation);
        }
        InequalityEvent::GainFallback => counters.gain_fallbacks += 1,
    }
    *max_violation = max_violation.max(step.max_violation);
    Ok(step.state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::{gen_synthetic, ImuErrorSpec, Profile, SynthSpec};

    #[test]
    fn noiseless_ekf_tracks_truth() {
        let log = gen_synthetic(&SynthSpec::new(Profile::Circuit, 30.0, 100.0, ImuErrorSpec::none(), 1)).unwrap();
        let mut spec = ExperimentSpec::new(Scenario::FullGnss, Variant::Ekf, 1);
        spec.gnss_noise_std = 0.0;
        spec.init_errors = InitErrors {
            vel: Vec3::zeros(),
            att: Vec3::zeros(),
        };
        let out = run_variant(&log, &spec).unwrap();
        assert!(out.metrics.prmse < 0.01, "{}", out.metrics.prmse);
    }

    #[test]
    fn denied_run_withholds_fixes_and_scores_outage() {
        let log = gen_synthetic(&SynthSpec::new(Profile::Hilly, 40.0, 50.0, ImuErrorSpec::none(), 2)).unwrap();
        let mut spec = ExperimentSpec::new(Scenario::GnssDenied, Variant::Dual, 2);
        spec.init_s = 20.0;
        spec.outage_s = 10.0;
        let out = run_variant(&log, &spec).unwrap();
        assert_eq!(out.counters.fixes_in_outage, 0);
        // The fix at t = 0 seeds the position; the other 19 are updates.
        assert_eq!(out.counters.gnss_updates, 19);
        assert_eq!(out.metrics.epochs, 501);
        assert!((out.window.0 - 20.0).abs() < 1e-12 && (out.window.1 - 30.0).abs() < 1e-9);
    }

    #[test]
    fn denied_needs_enough_data() {
        let log = gen_synthetic(&SynthSpec::new(Profile::Static, 10.0, 50.0, ImuErrorSpec::none(), 2)).unwrap();
        let spec = ExperimentSpec::new(Scenario::GnssDenied, Variant::Ekf, 2);
        assert!(matches!(run_variant(&log, &spec), Err(NavError::InvalidSpec(_))));
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        for s in Scenario::ALL {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
    }
}
