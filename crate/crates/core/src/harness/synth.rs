use std::fmt;
use std::str::FromStr;

use nalgebra::UnitQuaternion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nav::{GnssFix, ImuSample, NavState, Vec3, GRAVITY};
use crate::{NavError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Static,
    Straight,
    Circuit,
    Hilly,
}

impl FromStr for Profile {
    type Err = NavError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Profile::Static),
            "straight" => Ok(Profile::Straight),
            "circuit" => Ok(Profile::Circuit),
            "hilly" => Ok(Profile::Hilly),
            other => Err(NavError::InvalidSpec(format!("unknown profile '{other}'"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Static => "static",
            Profile::Straight => "straight",
            Profile::Circuit => "circuit",
            Profile::Hilly => "hilly",
        })
    }
}

/// Ground truth at one IMU epoch. `euler` is (roll, pitch, yaw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub p_ned: Vec3,
    pub v_ned: Vec3,
    pub euler: Vec3,
}

impl TruthSample {
    pub fn nav_state(&self) -> NavState {
        NavState::new(self.p_ned, self.v_ned, self.euler.x, self.euler.y, self.euler.z)
    }

    pub fn altitude(&self) -> f64 {
        -self.p_ned.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMeta {
    pub name: String,
    pub imu_rate: f64,
    pub duration: f64,
}

/// IMU samples with optional per-epoch truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub meta: LogMeta,
    pub imu: Vec<ImuSample>,
    /// Empty, or one sample per IMU epoch.
    pub truth: Vec<TruthSample>,
}

impl TrajectoryLog {
    pub fn new(name: &str, imu: Vec<ImuSample>, truth: Vec<TruthSample>) -> Result<Self> {
        if imu.len() < 2 {
            return Err(NavError::InvalidLog(format!("need at least 2 IMU samples, got {}", imu.len())));
        }
        let duration = imu[imu.len() - 1].t - imu[0].t;
        let log = Self {
            meta: LogMeta {
                name: name.to_owned(),
                imu_rate: (imu.len() - 1) as f64 / duration,
                duration,
            },
            imu,
            truth,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.imu.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(NavError::NonIncreasingTime { prev: w[0].t, next: w[1].t });
            }
        }
        if let Some(bad) = self.imu.iter().find(|s| !s.is_finite()) {
            return Err(NavError::InvalidLog(format!("non-finite IMU sample at t = {}", bad.t)));
        }
        let nominal = 1.0 / self.meta.imu_rate;
        for w in self.imu.windows(2) {
            let dt = w[1].t - w[0].t;
            if (dt - nominal).abs() > 0.01 * nominal {
                return Err(NavError::InvalidLog(format!(
                    "IMU interval {dt} at t = {} deviates from {nominal} by more than 1%",
                    w[0].t
                )));
            }
        }
        if !self.truth.is_empty() {
            if self.truth.len() != self.imu.len() {
                return Err(NavError::LengthMismatch {
                    left: self.truth.len(),
                    right: self.imu.len(),
                });
            }
            for (s, g) in self.imu.iter().zip(&self.truth) {
                if (s.t - g.t).abs() > 1e-9 * s.t.abs().max(1.0) {
                    return Err(NavError::InvalidLog(format!("truth time {} does not match IMU time {}", g.t, s.t)));
                }
            }
        }
        Ok(())
    }

    pub fn has_truth(&self) -> bool {
        !self.truth.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.meta.imu_rate
    }
}

/// Sensor errors added to the exact IMU signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuErrorSpec {
    /// m/s²
    pub accel_bias: Vec3,
    /// rad/s
    pub gyro_bias: Vec3,
    /// White-noise density, m/s/√s.
    pub accel_noise: f64,
    /// White-noise density, rad/√s.
    pub gyro_noise: f64,
}

impl ImuErrorSpec {
    pub fn none() -> Self {
        Self {
            accel_bias: Vec3::zeros(),
            gyro_bias: Vec3::zeros(),
            accel_noise: 0.0,
            gyro_noise: 0.0,
        }
    }

    /// A consumer-grade MEMS unit with the given accelerometer bias.
    pub fn mems(accel_bias: Vec3) -> Self {
        Self {
            accel_bias,
            gyro_bias: Vec3::repeat(1e-4),
            accel_noise: 0.01,
            gyro_noise: 1e-3,
        }
    }
}

/// Shape parameters of the synthetic profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileShape {
    /// Ground speed, m/s.
    pub speed: f64,
    /// Road grade of the straight profile and mean climb of the hilly one, rad.
    pub grade: f64,
    pub circuit_radius: f64,
    /// Height amplitude and period of the hilly profile. The derived envelope
    /// is a multiple of the excursion, so a gentle hill keeps the height bound
    /// within reach of a 30 s dead-reckoning drift.
    pub hill_amplitude: f64,
    pub hill_period: f64,
    /// Lateral weave amplitude and period of the hilly profile.
    pub weave_amplitude: f64,
    pub weave_period: f64,
    /// Body yaw offset from the velocity direction (sideslip), rad.
    pub slip_amplitude: f64,
    pub slip_period: f64,
    /// Body pitch offset from the flight-path angle, rad.
    pub squat_amplitude: f64,
    pub squat_period: f64,
    /// Roll gain on the turn rate, bank = gain·v·ψ̇/g.
    pub bank_gain: f64,
    pub start_yaw: f64,
}

impl Default for ProfileShape {
    fn default() -> Self {
        Self {
            speed: 10.0,
            grade: 0.0,
            circuit_radius: 50.0,
            hill_amplitude: 1.0,
            hill_period: 45.0,
            weave_amplitude: 15.0,
            weave_period: 40.0,
            slip_amplitude: 0.0,
            slip_period: 7.0,
            squat_amplitude: 0.0,
            squat_period: 5.0,
            bank_gain: 1.0,
            start_yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub profile: Profile,
    pub duration: f64,
    pub rate: f64,
    pub imu_errors: ImuErrorSpec,
    pub shape: ProfileShape,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(profile: Profile, duration: f64, rate: f64, imu_errors: ImuErrorSpec, seed: u64) -> Self {
        Self {
            profile,
            duration,
            rate,
            imu_errors,
            shape: ProfileShape::default(),
            seed,
        }
    }
}

/// Position, velocity and acceleration of the reference path at `t`.
fn path(profile: Profile, s: &ProfileShape, t: f64) -> (Vec3, Vec3, Vec3) {
    use std::f64::consts::TAU;
    match profile {
        Profile::Static => (Vec3::zeros(), Vec3::zeros(), Vec3::zeros()),
        Profile::Straight => {
            let (c, sn) = (s.start_yaw.cos(), s.start_yaw.sin());
            let v = Vec3::new(s.speed * s.grade.cos() * c, s.speed * s.grade.cos() * sn, -s.speed * s.grade.sin());
            (v * t, v, Vec3::zeros())
        }
        Profile::Circuit => {
            let w = s.speed / s.circuit_radius;
            let r = s.circuit_radius;
            let local = (
                Vec3::new(r * (w * t).sin(), r * (1.0 - (w * t).cos()), 0.0),
                Vec3::new(s.speed * (w * t).cos(), s.speed * (w * t).sin(), 0.0),
                Vec3::new(-s.speed * w * (w * t).sin(), s.speed * w * (w * t).cos(), 0.0),
            );
            rotate_yaw(local, s.start_yaw)
        }
        Profile::Hilly => {
            let wh = TAU / s.hill_period;
            let ww = TAU / s.weave_period;
            let (a, b) = (s.hill_amplitude, s.weave_amplitude);
            // Constant climb under the hills.
            let climb = s.speed * s.grade.tan();
            let local = (
                Vec3::new(s.speed * t, b * (ww * t).sin(), -a * (wh * t).sin() - climb * t),
                Vec3::new(s.speed, b * ww * (ww * t).cos(), -a * wh * (wh * t).cos() - climb),
                Vec3::new(0.0, -b * ww * ww * (ww * t).sin(), a * wh * wh * (wh * t).sin()),
            );
            rotate_yaw(local, s.start_yaw)
        }
    }
}

fn rotate_yaw((p, v, a): (Vec3, Vec3, Vec3), yaw: f64) -> (Vec3, Vec3, Vec3) {
    let r = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
    (r * p, r * v, r * a)
}

/// Body attitude: nose along the velocity, banked into turns, plus the
/// configured slip and squat offsets.
fn attitude(profile: Profile, s: &ProfileShape, t: f64, v: &Vec3, a: &Vec3) -> Vec3 {
    use std::f64::consts::TAU;
    let vh2 = v.x * v.x + v.y * v.y;
    if profile == Profile::Static || vh2 < 1e-12 {
        return Vec3::new(0.0, 0.0, s.start_yaw);
    }
    let yaw = v.y.atan2(v.x);
    let pitch = (-v.z).atan2(vh2.sqrt());
    let yaw_rate = (v.x * a.y - v.y * a.x) / vh2;
    let roll = (s.bank_gain * vh2.sqrt() * yaw_rate / GRAVITY).atan();
    let slip = s.slip_amplitude * (TAU * t / s.slip_period).sin();
    let squat = s.squat_amplitude * (TAU * t / s.squat_period).sin();
    Vec3::new(roll, pitch + squat, crate::nav::wrap_angle(yaw + slip))
}

/// Truth trajectory with IMU signals from exact inverse mechanization,
/// corrupted by the configured bias and white noise.
///
/// Truth positions are the trapezoidal integral of the analytic velocity, so a
/// noiseless log replays through the mechanization to rounding error.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<TrajectoryLog> {
    if !(spec.duration > 0.0 && spec.rate > 0.0) {
        return Err(NavError::InvalidSpec(format!(
            "duration and rate must be positive, got {} s at {} Hz",
            spec.duration, spec.rate
        )));
    }
    let e = &spec.imu_errors;
    if !(e.accel_noise >= 0.0 && e.gyro_noise >= 0.0) {
        return Err(NavError::InvalidSpec("IMU noise densities must be non-negative".into()));
    }
    let n = (spec.duration * spec.rate).round() as usize + 1;
    let dt = 1.0 / spec.rate;
    let mut truth = Vec::with_capacity(n);
    let mut quats = Vec::with_capacity(n);
    let mut p = path(spec.profile, &spec.shape, 0.0).0;
    let mut v_prev = Vec3::zeros();
    for k in 0..n {
        let t = k as f64 * dt;
        let (_, v, a) = path(spec.profile, &spec.shape, t);
        if k > 0 {
            p += (v_prev + v) * (0.5 * dt);
        }
        v_prev = v;
        let euler = attitude(spec.profile, &spec.shape, t, &v, &a);
        quats.push(UnitQuaternion::from_euler_angles(euler.x, euler.y, euler.z));
        truth.push(TruthSample { t, p_ned: p, v_ned: v, euler });
    }

    let gravity = Vec3::new(0.0, 0.0, GRAVITY);
    let mut imu = Vec::with_capacity(n);
    for k in 1..n {
        let w_b = (quats[k - 1].inverse() * quats[k]).scaled_axis() / dt;
        let mid = quats[k - 1] * UnitQuaternion::from_scaled_axis(w_b * (0.5 * dt));
        let accel = (truth[k].v_ned - truth[k - 1].v_ned) / dt - gravity;
        let f_b = mid.inverse_transform_vector(&accel);
        imu.push(ImuSample::new(truth[k].t, f_b, w_b));
    }
    let first = ImuSample::new(0.0, imu[0].f_b, imu[0].w_b);
    imu.insert(0, first);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sa = e.accel_noise * spec.rate.sqrt();
    let sg = e.gyro_noise * spec.rate.sqrt();
    let na = Normal::new(0.0, sa).map_err(|err| NavError::InvalidSpec(err.to_string()))?;
    let ng = Normal::new(0.0, sg).map_err(|err| NavError::InvalidSpec(err.to_string()))?;
    for s in &mut imu {
        let wa = Vec3::from_fn(|_, _| na.sample(&mut rng));
        let wg = Vec3::from_fn(|_, _| ng.sample(&mut rng));
        s.f_b += e.accel_bias + wa;
        s.w_b += e.gyro_bias + wg;
    }
    TrajectoryLog::new(&spec.profile.to_string(), imu, truth)
}

/// Subsamples truth to `rate` and adds i.i.d. Gaussian noise of `std` per axis.
///
/// The IMU rate is inferred from the truth timestamps; fixes fall on every
/// `round(imu_rate / rate)`-th epoch starting with the first.
pub fn corrupt_gnss(truth: &[TruthSample], std: f64, rate: f64, seed: u64) -> Result<Vec<GnssFix>> {
    if !(std >= 0.0 && std.is_finite()) {
        return Err(NavError::InvalidSpec(format!("GNSS noise std must be non-negative, got {std}")));
    }
    if !(rate > 0.0) {
        return Err(NavError::InvalidSpec(format!("GNSS rate must be positive, got {rate}")));
    }
    if truth.len() < 2 {
        return truth
            .iter()
            .map(|g| GnssFix::new(g.t, g.p_ned, Vec3::repeat(std)))
            .collect();
    }
    let span = truth[truth.len() - 1].t - truth[0].t;
    let imu_rate = (truth.len() - 1) as f64 / span;
    let step = ((imu_rate / rate).round() as usize).max(1);
    let normal = Normal::new(0.0, std).map_err(|err| NavError::InvalidSpec(err.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truth
        .iter()
        .step_by(step)
        .map(|g| {
            let noise = Vec3::from_fn(|_, _| normal.sample(&mut rng));
            GnssFix::new(g.t, g.p_ned + noise, Vec3::repeat(std))
        })
        .collect()
}
