mod support;

use dualnav::constraints::{BranchEstimate, BranchId};
use dualnav::fusion::{fuse, FusionRule, LambdaVector};
use dualnav::nav::{to_state_vector, Covariance, NavState, Vec15, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::random_spd15;

fn random_state(rng: &mut ChaCha8Rng, base: Option<&NavState>) -> NavState {
    let mut v = || rng.random_range(-5.0..5.0);
    let p = Vec3::new(v(), v(), v() * 10.0);
    let vel = Vec3::new(v(), v(), v() * 0.2);
    let (r, pi, y) = match base {
        Some(b) => {
            let e = b.euler();
            (e.x + v() * 0.01, e.y + v() * 0.01, e.z + v() * 0.01)
        }
        None => (v() * 0.05, v() * 0.05, v() * 0.5),
    };
    let mut s = NavState::new(p, vel, r, pi, y);
    s.b_a = Vec3::new(v(), v(), v()) * 0.01;
    s.b_g = Vec3::new(v(), v(), v()) * 1e-4;
    s
}

fn pair(seed: u64) -> (BranchEstimate, BranchEstimate, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_state(&mut rng, None);
    let b = random_state(&mut rng, Some(&a));
    let scale_a = 10f64.powf(rng.random_range(-3.0..1.0));
    let scale_b = 10f64.powf(rng.random_range(-3.0..1.0));
    let pa = random_spd15(&mut rng, 0.01) * scale_a;
    let pb = random_spd15(&mut rng, 0.01) * scale_b;
    (
        BranchEstimate {
            state: a,
            p: Covariance(pa),
            branch: BranchId::Nhc,
        },
        BranchEstimate {
            state: b,
            p: Covariance(pb),
            branch: BranchId::Inq,
        },
        rng,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn weights_partition_and_fused_slots_are_convex(seed in any::<u64>(), literal in any::<bool>()) {
        let (n, i, mut rng) = pair(seed);
        let lam = LambdaVector::new(Vec15::from_fn(|_, _| rng.random_range(0.0..12.0))).unwrap();
        let rule = if literal { FusionRule::Literal } else { FusionRule::Normalized };
        let f = fuse(&n, &i, &lam, rule).unwrap();
        let xn = to_state_vector(&n.state).unwrap().0;
        let xi = to_state_vector(&i.state).unwrap().0;
        for j in 0..15 {
            prop_assert_eq!(f.w_inq[j] + f.w_nhc[j], 1.0);
            prop_assert!((0.0..=1.0).contains(&f.w_inq[j]));
            let (lo, hi) = (xn[j].min(xi[j]), xn[j].max(xi[j]));
            prop_assert!(f.x15.0[j] >= lo - 1e-12 && f.x15.0[j] <= hi + 1e-12, "slot {}", j);
        }
    }

    #[test]
    fn larger_lambda_never_lowers_the_inq_weight(seed in any::<u64>(), slot in 0usize..15, bump in 0.0f64..5.0) {
        let (n, i, mut rng) = pair(seed);
        let base = Vec15::from_fn(|_, _| rng.random_range(0.0..3.0));
        let mut more = base;
        more[slot] += bump;
        let a = fuse(&n, &i, &LambdaVector::new(base).unwrap(), FusionRule::Normalized).unwrap();
        let b = fuse(&n, &i, &LambdaVector::new(more).unwrap(), FusionRule::Normalized).unwrap();
        prop_assert!(b.w_inq[slot] >= a.w_inq[slot]);
        for j in (0..15).filter(|j| *j != slot) {
            prop_assert_eq!(a.w_inq[j], b.w_inq[j]);
        }
    }
}
