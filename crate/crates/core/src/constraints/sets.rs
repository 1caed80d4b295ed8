use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::nav::{correction_jacobian, skew, slot, to_state_vector, Mat15, NavState, Vec15};
use crate::{NavError, Result};

/// Physical envelope of the vehicle. Infinite limits are allowed and never bind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBounds {
    pub h_min: f64,
    pub h_max: f64,
    pub roll_min: f64,
    pub roll_max: f64,
    pub pitch_min: f64,
    pub pitch_max: f64,
    /// Forward speed cap, m/s.
    pub v_max: f64,
}

impl EnvelopeBounds {
    pub fn unbounded(v_max: f64) -> Self {
        Self {
            h_min: f64::NEG_INFINITY,
            h_max: f64::INFINITY,
            roll_min: f64::NEG_INFINITY,
            roll_max: f64::INFINITY,
            pitch_min: f64::NEG_INFINITY,
            pitch_max: f64::INFINITY,
            v_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("h", self.h_min, self.h_max),
            ("roll", self.roll_min, self.roll_max),
            ("pitch", self.pitch_min, self.pitch_max),
        ];
        for (name, lo, hi) in pairs {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(NavError::InvalidBounds(format!("{name}: [{lo}, {hi}]")));
            }
        }
        if !(self.v_max > 0.0) {
            return Err(NavError::InvalidBounds(format!("v_max = {}", self.v_max)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowKind {
    /// `row · x15 ≤ bound` on the 15-slot state vector.
    Linear,
    /// `sign · (T_n^b vⁿ)_x ≤ bound`; `row` holds its error-state sensitivity
    /// at the state it was built from.
    BodyForwardVelocity { sign: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub row: Vec15,
    pub bound: f64,
    pub label: String,
    pub kind: RowKind,
}

impl ConstraintRow {
    pub fn linear(slot: usize, coeff: f64, bound: f64, label: &str) -> Self {
        let mut row = Vec15::zeros();
        row[slot] = coeff;
        Self {
            row,
            bound,
            label: label.to_owned(),
            kind: RowKind::Linear,
        }
    }

    /// Constrained quantity evaluated on a nominal state.
    pub fn value(&self, state: &NavState) -> Result<f64> {
        match self.kind {
            RowKind::Linear => Ok(self.row.dot(&to_state_vector(state)?.0)),
            RowKind::BodyForwardVelocity { sign } => Ok(sign * state.body_velocity().x),
        }
    }

    /// Sensitivity of [`value`](Self::value) to an error-state correction
    /// applied to `state`. `m` is the state's correction Jacobian.
    pub fn correction_sensitivity(&self, m: &Mat15) -> Vec15 {
        match self.kind {
            RowKind::Linear => m.transpose() * self.row,
            RowKind::BodyForwardVelocity { .. } => -self.row,
        }
    }

    pub fn is_satisfied(&self, state: &NavState, tol: f64) -> Result<bool> {
        Ok(self.value(state)? <= self.bound + tol)
    }
}

/// Stacked constraint rows `C x ≤ d`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintSet {
    rows: Vec<ConstraintRow>,
}

impl ConstraintSet {
    pub fn new(rows: Vec<ConstraintRow>) -> Result<Self> {
        let cs = Self { rows };
        cs.check_consistent()?;
        Ok(cs)
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn union(&self, other: &ConstraintSet) -> Result<ConstraintSet> {
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        ConstraintSet::new(rows)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn c(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), 15, |i, j| self.rows[i].row[j])
    }

    pub fn d(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.rows.iter().map(|r| r.bound))
    }

    /// Rejects non-finite rows and opposing single-slot rows that leave no room.
    pub fn check_consistent(&self) -> Result<()> {
        for r in &self.rows {
            if !r.row.iter().all(|v| v.is_finite()) || r.bound.is_nan() || r.bound == f64::NEG_INFINITY {
                return Err(NavError::InvalidConstraints(format!("row '{}' is not finite", r.label)));
            }
        }
        let single = |r: &ConstraintRow| -> Option<(usize, f64)> {
            if r.kind != RowKind::Linear {
                return None;
            }
            let nz: Vec<usize> = (0..15).filter(|&j| r.row[j] != 0.0).collect();
            (nz.len() == 1).then(|| (nz[0], r.row[nz[0]]))
        };
        for (i, a) in self.rows.iter().enumerate() {
            let Some((ja, ca)) = single(a) else { continue };
            for b in &self.rows[i + 1..] {
                let Some((jb, cb)) = single(b) else { continue };
                if ja != jb || ca.signum() == cb.signum() {
                    continue;
                }
                // ca·x ≤ a.bound and cb·x ≤ b.bound with opposite signs.
                let (upper, lower) = if ca > 0.0 {
                    (a.bound / ca, -b.bound / cb.abs())
                } else {
                    (b.bound / cb, -a.bound / ca.abs())
                };
                if lower > upper {
                    return Err(NavError::InvalidConstraints(format!(
                        "'{}' and '{}' leave slot {ja} empty: [{lower}, {upper}]",
                        a.label, b.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest `value - bound` over all rows (negative when strictly inside).
    pub fn max_violation(&self, state: &NavState) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for r in &self.rows {
            worst = worst.max(r.value(state)? - r.bound);
        }
        Ok(worst)
    }

    pub fn is_satisfied(&self, state: &NavState, tol: f64) -> Result<bool> {
        Ok(self.max_violation(state)? <= tol)
    }

    /// Sensitivities of every row to an error-state correction of `state`.
    pub fn correction_sensitivities(&self, state: &NavState) -> DMatrix<f64> {
        let m = correction_jacobian(state);
        let mut out = DMatrix::zeros(self.len(), 15);
        for (i, r) in self.rows.iter().enumerate() {
            out.set_row(i, &r.correction_sensitivity(&m).transpose());
        }
        out
    }
}

/// Height, roll and pitch rows: upper limits first, then negated lower limits.
pub fn build_static_constraints(b: &EnvelopeBounds) -> Result<ConstraintSet> {
    b.validate()?;
    ConstraintSet::new(vec![
        ConstraintRow::linear(slot::HEIGHT, 1.0, b.h_max, "h_max"),
        ConstraintRow::linear(slot::ROLL, 1.0, b.roll_max, "roll_max"),
        ConstraintRow::linear(slot::PITCH, 1.0, b.pitch_max, "pitch_max"),
        ConstraintRow::linear(slot::HEIGHT, -1.0, -b.h_min, "h_min"),
        ConstraintRow::linear(slot::ROLL, -1.0, -b.roll_min, "roll_min"),
        ConstraintRow::linear(slot::PITCH, -1.0, -b.pitch_min, "pitch_min"),
    ])
}

/// Down-velocity limit `|sin θ|·v_max` used by the projection path.
pub fn build_velocity_constraint_qp(pitch: f64, v_max: f64) -> Result<ConstraintSet> {
    if !(v_max > 0.0) || !pitch.is_finite() {
        return Err(NavError::InvalidBounds(format!("v_max = {v_max}, pitch = {pitch}")));
    }
    let vd = pitch.sin().abs() * v_max;
    ConstraintSet::new(vec![
        ConstraintRow::linear(slot::VEL_DOWN, 1.0, vd, "v_down_max"),
        ConstraintRow::linear(slot::VEL_DOWN, -1.0, vd, "v_down_min"),
    ])
}

/// Body-forward speed rows `±e₁ᵀ[0, T_n^b, T_n^b[vⁿ]×, 0, 0]` at `state`.
pub fn build_velocity_constraint_gain(state: &NavState, v_max: f64) -> Result<ConstraintSet> {
    if !(v_max > 0.0) {
        return Err(NavError::InvalidBounds(format!("v_max = {v_max}")));
    }
    let tnb: Matrix3<f64> = state.body_to_nav().transpose();
    let vel = tnb.row(0);
    let att = (tnb * skew(&state.v_ned)).row(0).into_owned();
    let make = |sign: f64, label: &str| {
        let mut row = Vec15::zeros();
        for k in 0..3 {
            row[slot::VEL + k] = sign * vel[k];
            row[slot::ATT + k] = sign * att[k];
        }
        ConstraintRow {
            row,
            bound: v_max,
            label: label.to_owned(),
            kind: RowKind::BodyForwardVelocity { sign },
        }
    };
    ConstraintSet::new(vec![make(1.0, "v_fwd_max"), make(-1.0, "v_fwd_min")])
}
