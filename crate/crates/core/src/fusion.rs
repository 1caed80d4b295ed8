//! Per-slot variance-weighted combination of the NHC and inequality branch
//! estimates, biased by a λ vector.

use serde::{Deserialize, Serialize};

use crate::constraints::{BranchEstimate, BranchId};
use crate::nav::{correction_jacobian, from_state_vector, slot, to_state_vector, wrap_angle, NavState, StateVector15, Vec15};
use crate::{NavError, Result};

/// Largest attitude disagreement between branches that fusion accepts.
pub const MAX_ATTITUDE_GAP_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaVector(pub Vec15);

impl LambdaVector {
    pub fn new(lam: Vec15) -> Result<Self> {
        let out = Self(lam);
        out.validate()?;
        Ok(out)
    }

    pub fn uniform(v: f64) -> Result<Self> {
        Self::new(Vec15::repeat(v))
    }

    /// Preset used while GNSS is available.
    pub fn full_gnss() -> Self {
        let mut lam = Vec15::repeat(1.0);
        lam[0] = 0.85;
        lam[1] = 0.85;
        for j in [slot::HEIGHT, slot::VEL_DOWN, slot::ROLL, slot::PITCH] {
            lam[j] = 10.0;
        }
        Self(lam)
    }

    /// Preset used once GNSS is lost.
    pub fn gnss_denied() -> Self {
        let mut lam = Vec15::repeat(1.0);
        lam[0] = 0.25;
        lam[1] = 0.25;
        lam[slot::HEIGHT] = 10.0;
        Self(lam)
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            Some(j) => Err(NavError::InvalidSpec(format!("lambda[{j}] = {} must be positive", self.0[j]))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionRule {
    /// `λ·(1/σ_I²) / (1/σ_I² + 1/σ_N²)`
    #[default]
    Normalized,
    /// `λ·(1/σ_I² + 1/σ_N²)·σ_I²`
    Literal,
}

impl FusionRule {
    /// INQ weight before clipping.
    pub fn raw_weight(self, var_inq: f64, var_nhc: f64, lam: f64) -> f64 {
        match self {
            FusionRule::Normalized => lam * var_nhc / (var_inq + var_nhc),
            FusionRule::Literal => lam * (1.0 / var_inq + 1.0 / var_nhc) * var_inq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedEstimate {
    pub state: NavState,
    pub x15: StateVector15,
    pub w_inq: Vec15,
    pub w_nhc: Vec15,
}

/// Per-slot variances in the state-vector layout, `diag(M P Mᵀ)`.
pub fn slot_variances(b: &BranchEstimate) -> Result<Vec15> {
    let m = correction_jacobian(&b.state);
    let var = (m * b.p.0 * m.transpose()).diagonal();
    match var.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(j) => Err(NavError::NonPositiveVariance { slot: j, value: var[j] }),
        None => Ok(var),
    }
}

pub fn fuse(nhc: &BranchEstimate, inq: &BranchEstimate, lam: &LambdaVector, rule: FusionRule) -> Result<FusedEstimate> {
    if nhc.branch != BranchId::Nhc || inq.branch != BranchId::Inq {
        return Err(NavError::InvalidSpec("fuse expects (NHC, INQ) branch order".into()));
    }
    lam.validate()?;
    let gap = nhc.state.att.angle_to(&inq.state.att).to_degrees();
    if !(gap <= MAX_ATTITUDE_GAP_DEG) {
        return Err(NavError::AttitudeDivergence { deg: gap });
    }
    let var_n = slot_variances(nhc)?;
    let var_i = slot_variances(inq)?;
    let x_n = to_state_vector(&nhc.state)?.0;
    let x_i = to_state_vector(&inq.state)?.0;

    let mut w_inq = Vec15::zeros();
    let mut w_nhc = Vec15::zeros();
    let mut x = Vec15::zeros();
    for j in 0..15 {
        let w = rule.raw_weight(var_i[j], var_n[j], lam.0[j]).clamp(0.0, 1.0);
        w_inq[j] = w;
        w_nhc[j] = 1.0 - w;
        let angle = (slot::ROLL..=slot::YAW).contains(&j);
        x[j] = if angle {
            wrap_angle(x_n[j] + w * wrap_angle(x_i[j] - x_n[j]))
        } else {
            x_n[j] + w * (x_i[j] - x_n[j])
        };
    }
    let x15 = StateVector15(x);
    Ok(FusedEstimate {
        state: from_state_vector(&x15, &nhc.state)?,
        x15,
        w_inq,
        w_nhc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nav::{Covariance, Mat15, Vec3};

    fn branch(state: NavState, var: f64, id: BranchId) -> BranchEstimate {
        BranchEstimate {
            state,
            p: Covariance(Mat15::identity() * var),
            branch: id,
        }
    }

    #[test]
    fn presets() {
        let full = LambdaVector::full_gnss().0;
        let denied = LambdaVector::gnss_denied().0;
        for j in [2, 5, 6, 7] {
            assert_eq!(full[j], 10.0);
        }
        assert_eq!((full[0], full[1]), (0.85, 0.85));
        assert_eq!((denied[0], denied[1], denied[2]), (0.25, 0.25, 10.0));
        assert!(denied.iter().skip(3).all(|v| *v == 1.0));
        assert_eq!(full.iter().filter(|v| **v == 1.0).count(), 9);
    }

    #[test]
    fn equal_variances_split_evenly() {
        let s = NavState::default();
        let lam = LambdaVector::uniform(1.0).unwrap();
        let f = fuse(&branch(s, 2.0, BranchId::Nhc), &branch(s, 2.0, BranchId::Inq), &lam, FusionRule::Normalized).unwrap();
        assert!(f.w_inq.iter().all(|w| (*w - 0.5).abs() < 1e-15));
        let lit = fuse(&branch(s, 2.0, BranchId::Nhc), &branch(s, 2.0, BranchId::Inq), &lam, FusionRule::Literal).unwrap();
        assert!(lit.w_inq.iter().all(|w| *w == 1.0));
    }

    #[test]
    fn confident_inq_branch_dominates() {
        let a = NavState::new(Vec3::new(0.0, 0.0, -10.0), Vec3::zeros(), 0.0, 0.0, 0.0);
        let b = NavState::new(Vec3::new(0.0, 0.0, -20.0), Vec3::zeros(), 0.0, 0.0, 0.0);
        let lam = LambdaVector::uniform(1.0).unwrap();
        let f = fuse(&branch(a, 1.0, BranchId::Nhc), &branch(b, 1e-12, BranchId::Inq), &lam, FusionRule::Normalized).unwrap();
        assert!((f.x15.0[slot::HEIGHT] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn identical_states_are_preserved() {
        let s = NavState::new(Vec3::new(3.0, -4.0, -5.0), Vec3::new(1.0, 2.0, 0.1), 0.02, -0.03, 2.9);
        let f = fuse(
            &branch(s, 1.0, BranchId::Nhc),
            &branch(s, 0.3, BranchId::Inq),
            &LambdaVector::full_gnss(),
            FusionRule::Normalized,
        )
        .unwrap();
        assert_eq!(f.x15, to_state_vector(&s).unwrap());
    }

    #[test]
    fn yaw_fuses_across_the_wrap() {
        let a = NavState::new(Vec3::zeros(), Vec3::zeros(), 0.0, 0.0, 3.1);
        let b = NavState::new(Vec3::zeros(), Vec3::zeros(), 0.0, 0.0, -3.1);
        let lam = LambdaVector::uniform(1.0).unwrap();
        let f = fuse(&branch(a, 1.0, BranchId::Nhc), &branch(b, 1.0, BranchId::Inq), &lam, FusionRule::Normalized).unwrap();
        assert!(f.x15.0[slot::YAW].abs() > 3.1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = NavState::default();
        let lam = LambdaVector::uniform(1.0).unwrap();
        let zero = BranchEstimate {
            state: s,
            p: Covariance(Mat15::zeros()),
            branch: BranchId::Inq,
        };
        assert!(matches!(
            fuse(&branch(s, 1.0, BranchId::Nhc), &zero, &lam, FusionRule::Normalized),
            Err(NavError::NonPositiveVariance { .. })
        ));
        let tilted = NavState::new(Vec3::zeros(), Vec3::zeros(), 0.3, 0.0, 0.0);
        assert!(matches!(
            fuse(&branch(s, 1.0, BranchId::Nhc), &branch(tilted, 1.0, BranchId::Inq), &lam, FusionRule::Normalized),
            Err(NavError::AttitudeDivergence { .. })
        ));
        assert!(LambdaVector::uniform(0.0).is_err());
        assert!(fuse(&branch(s, 1.0, BranchId::Inq), &branch(s, 1.0, BranchId::Nhc), &lam, FusionRule::Normalized).is_err());
    }
}
