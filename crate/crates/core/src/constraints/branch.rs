use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::eskf::{gnss_update, predict, FilterConfig, FilterState};
use crate::nav::{correction_jacobian, from_state_vector, to_state_vector, Covariance, GnssFix, ImuSample, NavState};
use crate::qp::{project_state_detailed, DEFAULT_TOL};
use crate::{NavError, Result};

use super::gain::constrained_gain_update_detailed;
use super::nhc::nhc_update;
use super::sets::{
    build_static_constraints, build_velocity_constraint_gain, build_velocity_constraint_qp, ConstraintSet,
    EnvelopeBounds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BranchId {
    Nhc,
    Inq,
}

/// A branch output handed to fusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEstimate {
    pub state: NavState,
    pub p: Covariance,
    pub branch: BranchId,
}

impl BranchEstimate {
    pub fn from_filter(fs: &FilterState, branch: BranchId) -> Self {
        Self {
            state: fs.nominal,
            p: fs.p,
            branch,
        }
    }
}

/// What the inequality branch did on one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalityEvent {
    /// No fix; the predicted state was already inside the envelope.
    Inside,
    /// No fix; the state was projected with this many binding rows.
    Projected { active: usize },
    /// Fix applied with the standard gain.
    GainUnconstrained,
    /// Fix applied with a re-optimized gain.
    GainConstrained { residual_violation: bool },
    /// The gain problem failed; the standard gain was applied.
    GainFallback,
}

/// NHC branch epoch: predict, GNSS update when a fix is present, then the NHC
/// pseudo-measurement. Returns whether the NHC update was skipped.
pub fn nhc_branch_step(
    fs: &FilterState,
    imu: &ImuSample,
    fix: Option<&GnssFix>,
    r_nhc: &Matrix2<f64>,
    cfg: &FilterConfig,
) -> Result<(FilterState, bool)> {
    let mut out = predict(fs, imu, cfg)?;
    if let Some(fix) = fix {
        out = gnss_update(&out, fix, cfg)?;
    }
    match nhc_update(&out, r_nhc) {
        Ok(next) => Ok((next, false)),
        Err(NavError::SingularInnovation(_)) => Ok((out, true)),
        Err(e) => Err(e),
    }
}

pub fn inequality_branch_step(
    fs: &FilterState,
    imu: &ImuSample,
    fix: Option<&GnssFix>,
    bounds: &EnvelopeBounds,
    cfg: &FilterConfig,
) -> Result<FilterState> {
    Ok(inequality_branch_step_detailed(fs, imu, fix, bounds, cfg)?.state)
}

/// Inequality branch epoch.
///
/// With a fix the GNSS gain is constrained by the static rows and the
/// body-forward speed rows. Without one the predicted state is projected onto
/// the static rows and the down-velocity rows, and the covariance is left at
/// its predicted value.
pub fn inequality_branch_step_detailed(
    fs: &FilterState,
    imu: &ImuSample,
    fix: Option<&GnssFix>,
    bounds: &EnvelopeBounds,
    cfg: &FilterConfig,
) -> Result<InequalityStep> {
    let prior = predict(fs, imu, cfg)?;
    let (state, event, cs) = inequality_correct(&prior, fix, bounds, cfg)?;
    let max_violation = cs.max_violation(&state.nominal)?;
    Ok(InequalityStep {
        state,
        event,
        max_violation,
    })
}

/// Result of one inequality-branch epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityStep {
    pub state: FilterState,
    pub event: InequalityEvent,
    /// Largest `value - bound` of the applied rows on the output state.
    pub max_violation: f64,
}

fn inequality_correct(
    prior: &FilterState,
    fix: Option<&GnssFix>,
    bounds: &EnvelopeBounds,
    cfg: &FilterConfig,
) -> Result<(FilterState, InequalityEvent, ConstraintSet)> {
    let prior = *prior;
    let statics = build_static_constraints(bounds)?;
    match fix {
        Some(fix) => {
            let cs = statics.union(&build_velocity_constraint_gain(&prior.nominal, bounds.v_max)?)?;
            let out = constrained_gain_update_detailed(&prior, fix, &cs, cfg)?;
            let event = match (out.constrained, out.fallback) {
                (false, _) => InequalityEvent::GainUnconstrained,
                (true, true) => InequalityEvent::GainFallback,
                (true, false) => InequalityEvent::GainConstrained {
                    residual_violation: out.residual_violation,
                },
            };
            Ok((out.state, event, cs))
        }
        None => {
            let cs = statics.union(&build_velocity_constraint_qp(prior.nominal.pitch(), bounds.v_max)?)?;
            let x15 = to_state_vector(&prior.nominal)?;
            let m = correction_jacobian(&prior.nominal);
            let p15 = Covariance::symmetrized(m * prior.p.0 * m.transpose());
            let (projected, sol) = project_state_detailed(&x15, &p15, &cs, DEFAULT_TOL)?;
            match sol {
                None => Ok((prior, InequalityEvent::Inside, cs)),
                Some(sol) => {
                    let nominal = from_state_vector(&projected, &prior.nominal)?;
                    Ok((
                        FilterState {
                            nominal,
                            p: prior.p,
                            t: prior.t,
                        },
                        InequalityEvent::Projected {
                            active: sol.active_set.len(),
                        },
                        cs,
                    ))
                }
            }
        }
    }
}
