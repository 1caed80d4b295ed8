mod support;

use dualnav::constraints::{
    build_static_constraints, build_velocity_constraint_gain, build_velocity_constraint_qp, constrained_gain,
    constrained_gain_update_detailed, inequality_branch_step, inequality_branch_step_detailed, nhc_update,
    EnvelopeBounds, InequalityEvent,
};
use dualnav::eskf::{gnss_update, predict, FilterConfig, FilterState};
use dualnav::nav::{slot, Covariance, GnssFix, ImuNoise, ImuSample, Mat15, NavState, Vec15, Vec3, GRAVITY};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::random_spd;

fn config() -> FilterConfig {
    let noise = ImuNoise::isotropic(0.01, 1e-3, 1e-4, 1e-5);
    let mut p0 = Vec15::repeat(0.01);
    for j in 0..3 {
        p0[j] = 4.0;
        p0[3 + j] = 0.25;
    }
    FilterConfig::new(noise, Matrix3::identity() * 4.0, Mat15::from_diagonal(&p0)).unwrap()
}

/// Specific force that holds `state` at rest plus an extra NED acceleration.
fn rest_imu(state: &NavState, t: f64, accel_ned: Vec3) -> ImuSample {
    let f_n = Vec3::new(0.0, 0.0, -GRAVITY) + accel_ned;
    ImuSample::new(t, state.body_to_nav().transpose() * f_n, Vec3::zeros())
}

#[test]
fn nhc_contracts_lateral_velocity_by_the_scalar_factor() {
    let state = NavState::new(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), 0.0, 0.0, 0.0);
    let mut d = Vec15::repeat(0.01);
    d[slot::VEL + 1] = 0.3;
    let fs = FilterState::new(state, Covariance::from_diagonal(&d), 0.0);
    let r = Matrix2::identity() * 0.05;
    let out = nhc_update(&fs, &r).unwrap();
    let lateral = out.nominal.body_velocity().y;
    // Lateral row touches only v_east here, so the update is a 1D Kalman step.
    let expected = 1.0 * 0.05 / (0.3 + 0.05);
    assert!(lateral.abs() < 1.0);
    assert!((lateral - expected).abs() < 1e-9, "{lateral} vs {expected}");
}

#[test]
fn down_velocity_limit_follows_pitch() {
    let cs = build_velocity_constraint_qp(std::f64::consts::FRAC_PI_6, 13.89).unwrap();
    assert!((cs.d()[0] - 6.945).abs() < 1e-9 && (cs.d()[1] - 6.945).abs() < 1e-9);
    let flat = build_velocity_constraint_qp(0.0, 13.89).unwrap();
    assert_eq!(flat.d()[0], 0.0);
    let steep = build_velocity_constraint_qp(std::f64::consts::FRAC_PI_2, 13.89).unwrap();
    assert!((steep.d()[0] - 13.89).abs() < 1e-12);
}

#[test]
fn forward_row_rotates_with_yaw() {
    let east = NavState::new(Vec3::zeros(), Vec3::new(0.0, 5.0, 0.0), 0.0, 0.0, std::f64::consts::FRAC_PI_2);
    let cs = build_velocity_constraint_gain(&east, 10.0).unwrap();
    let row = cs.rows()[0].row;
    assert!((row[slot::VEL] - 0.0).abs() < 1e-12);
    assert!((row[slot::VEL + 1] - 1.0).abs() < 1e-12);
    assert!(row[slot::VEL + 2].abs() < 1e-12);
    let still = NavState::new(Vec3::zeros(), Vec3::zeros(), 0.1, 0.2, 0.3);
    let cs = build_velocity_constraint_gain(&still, 10.0).unwrap();
    for r in cs.rows() {
        assert!(r.row.fixed_rows::<3>(slot::ATT).norm() < 1e-15);
    }
}

fn joseph_trace(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>, k: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let a = DMatrix::identity(n, n) - k * h;
    (&a * p * a.transpose() + k * r * k.transpose()).trace()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn constrained_gain_never_beats_the_kalman_trace(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=3);
        let l = rng.random_range(1..=3);
        let p = random_spd(&mut rng, n, 0.1);
        let r = random_spd(&mut rng, m, 0.1);
        let h = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let dy = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
        let jac = DMatrix::from_fn(l, n, |_, _| rng.random_range(-1.0..1.0));
        let base = DVector::zeros(l);
        // Bounds that cut part of the way toward the unconstrained correction.
        let s = &h * &p * h.transpose() + &r;
        let k0 = &p * h.transpose() * s.clone().try_inverse().unwrap();
        let free = &jac * (&k0 * &dy);
        let d = DVector::from_fn(l, |i, _| free[i] * rng.random_range(0.0..0.9) + rng.random_range(0.0..0.2));
        let (kc, sol) = constrained_gain(&p, &h, &r, &dy, &jac, &base, &d).unwrap();
        prop_assume!(sol.status == dualnav::qp::QpStatus::Optimal);
        let reached = &jac * (&kc * &dy);
        for i in 0..l {
            prop_assert!(reached[i] <= d[i] + 1e-8);
        }
        prop_assert!(joseph_trace(&p, &h, &r, &kc) >= joseph_trace(&p, &h, &r, &k0) - 1e-9);
    }
}

fn wide_bounds() -> EnvelopeBounds {
    EnvelopeBounds {
        h_min: -1e3,
        h_max: 1e3,
        roll_min: -1.0,
        roll_max: 1.0,
        pitch_min: -1.0,
        pitch_max: 1.0,
        v_max: 100.0,
    }
}

#[test]
fn feasible_fix_matches_plain_update_bit_for_bit() {
    let cfg = config();
    let state = NavState::new(Vec3::new(1.0, 2.0, -3.0), Vec3::new(5.0, 0.5, 0.0), 0.01, 0.02, 0.3);
    let fs = FilterState::new(state, Covariance(cfg.p0), 0.0);
    let imu = ImuSample::new(0.01, Vec3::new(0.1, 0.0, -GRAVITY), Vec3::new(0.0, 0.0, 0.01));
    let fix = GnssFix::new(0.01, Vec3::new(1.5, 1.5, -2.0), Vec3::repeat(2.0)).unwrap();
    let got = inequality_branch_step(&fs, &imu, Some(&fix), &wide_bounds(), &cfg).unwrap();
    let expected = gnss_update(&predict(&fs, &imu, &cfg).unwrap(), &fix, &cfg).unwrap();
    assert_eq!(got, expected);

    let cs = build_static_constraints(&wide_bounds()).unwrap();
    let prior = predict(&fs, &imu, &cfg).unwrap();
    let out = constrained_gain_update_detailed(&prior, &fix, &cs, &cfg).unwrap();
    assert!(!out.constrained);
    assert_eq!(out.state, expected);
}

#[test]
fn gain_is_reoptimized_when_the_fix_pulls_past_the_ceiling() {
    let cfg = config();
    let state = NavState::new(Vec3::new(0.0, 0.0, -9.0), Vec3::zeros(), 0.0, 0.0, 0.0);
    let fs = FilterState::new(state, Covariance(cfg.p0), 0.0);
    let mut b = wide_bounds();
    b.h_max = 10.0;
    let cs = build_static_constraints(&b).unwrap();
    let fix = GnssFix::new(0.0, Vec3::new(0.0, 0.0, -20.0), Vec3::repeat(2.0)).unwrap();
    let out = constrained_gain_update_detailed(&fs, &fix, &cs, &cfg).unwrap();
    assert!(out.constrained && !out.fallback && !out.residual_violation);
    assert!(out.state.nominal.altitude() <= 10.0 + 1e-6);
    assert!(out.state.nominal.altitude() > 9.5);
    let plain = gnss_update(&fs, &fix, &cfg).unwrap();
    assert!(out.state.p.0.trace() >= plain.p.0.trace() - 1e-12);
    assert!(out.state.p.min_eigenvalue() > 0.0);
}

fn pitched_bounds(h_max: f64) -> EnvelopeBounds {
    EnvelopeBounds {
        h_max,
        ..wide_bounds()
    }
}

#[test]
fn denied_bias_drive_is_held_under_the_ceiling() {
    let cfg = config();
    let state = NavState::new(Vec3::zeros(), Vec3::zeros(), 0.0, 0.1, 0.0);
    let mut fs = FilterState::new(state, Covariance(cfg.p0), 0.0);
    let up = Vec3::new(0.0, 0.0, -0.05);
    let bounds = pitched_bounds(1.0);
    let mut projected = 0;
    for k in 1..=2000 {
        let imu = rest_imu(&state, k as f64 * 0.01, up);
        let step = inequality_branch_step_detailed(&fs, &imu, None, &bounds, &cfg).unwrap();
        if matches!(step.event, InequalityEvent::Projected { .. }) {
            projected += 1;
        }
        assert!(step.state.nominal.altitude() <= 1.0 + 1e-6, "epoch {k}");
        assert!(step.max_violation <= 1e-6);
        fs = step.state;
    }
    assert!(projected > 0);
    // Unconstrained the bias would climb 10 m in 20 s.
    assert!(fs.nominal.altitude() > 0.9);
}

#[test]
fn level_pitch_freezes_altitude_without_gnss() {
    let cfg = config();
    let state = NavState::new(Vec3::new(0.0, 0.0, -5.0), Vec3::zeros(), 0.0, 0.0, 0.0);
    let mut fs = FilterState::new(state, Covariance(cfg.p0), 0.0);
    let up = Vec3::new(0.0, 0.0, -0.05);
    let mut h_prev = 5.0;
    for k in 1..=1000 {
        let imu = rest_imu(&state, k as f64 * 0.01, up);
        fs = inequality_branch_step(&fs, &imu, None, &wide_bounds(), &cfg).unwrap();
        assert!(fs.nominal.v_ned.z.abs() < 1e-9, "epoch {k}");
        // The climb the bias would produce is never integrated. The weighted
        // projection may still move altitude through its correlation with v_down.
        let h = fs.nominal.altitude();
        assert!(h <= h_prev + 0.5 * 0.05 * 1e-4 + 1e-12, "epoch {k}");
        h_prev = h;
    }
    assert!(fs.nominal.altitude() < 5.0 + 1e-6);
}

#[test]
fn level_pitch_freezes_altitude_when_uncorrelated() {
    // Fresh diagonal covariance each epoch: the v_down clamp cannot leak into
    // the altitude slot, so altitude only moves by the in-step drift.
    let mut cfg = config();
    cfg.noise = ImuNoise::zero();
    let state = NavState::new(Vec3::new(0.0, 0.0, -5.0), Vec3::zeros(), 0.0, 0.0, 0.0);
    let mut fs = FilterState::new(state, Covariance(cfg.p0), 0.0);
    let up = Vec3::new(0.0, 0.0, -0.05);
    for k in 1..=1000 {
        let imu = rest_imu(&state, k as f64 * 0.01, up);
        fs.p = Covariance(Mat15::identity());
        let before = fs.nominal.altitude();
        fs = inequality_branch_step(&fs, &imu, None, &wide_bounds(), &cfg).unwrap();
        assert!(fs.nominal.v_ned.z.abs() < 1e-9);
        let drift = 0.5 * 0.05 * 1e-4;
        assert!((fs.nominal.altitude() - before).abs() <= 0.02 * drift + drift, "epoch {k}");
    }
    assert!((fs.nominal.altitude() - 5.0).abs() < 1000.0 * 0.5 * 0.05 * 1e-4 * 1.1);
}

#[test]
fn projection_keeps_the_predicted_covariance() {
    let cfg = config();
    let state = NavState::new(Vec3::new(0.0, 0.0, -0.999), Vec3::new(0.0, 0.0, -0.5), 0.0, 0.1, 0.0);
    let fs = FilterState::new(state, Covariance(cfg.p0), 0.0);
    let imu = rest_imu(&state, 0.01, Vec3::zeros());
    let step = inequality_branch_step_detailed(&fs, &imu, None, &pitched_bounds(1.0), &cfg).unwrap();
    assert!(matches!(step.event, InequalityEvent::Projected { .. }));
    let prior = predict(&fs, &imu, &cfg).unwrap();
    assert_eq!(step.state.p, prior.p);
    assert!(step.state.nominal.altitude() <= 1.0 + 1e-9);
}
