use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::TruthSample;
use crate::constraints::EnvelopeBounds;
use crate::{NavError, Result};

/// Reference for the height envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AltitudeMode {
    /// `h₀ ± scale·max|h - h₀|`
    #[default]
    Relative,
    /// `±scale·max|h|`
    Absolute,
}

impl FromStr for AltitudeMode {
    type Err = NavError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relative" => Ok(AltitudeMode::Relative),
            "absolute" => Ok(AltitudeMode::Absolute),
            other => Err(NavError::InvalidSpec(format!("unknown altitude mode '{other}'"))),
        }
    }
}

impl fmt::Display for AltitudeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AltitudeMode::Relative => "relative",
            AltitudeMode::Absolute => "absolute",
        })
    }
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

/// Envelope of `scale` times the largest truth excursion of height, roll and pitch.
pub fn derive_bounds(truth: &[TruthSample], scale: f64, v_max: f64, mode: AltitudeMode) -> Result<EnvelopeBounds> {
    if truth.is_empty() {
        return Err(NavError::InvalidSpec("cannot derive bounds from empty truth".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(NavError::InvalidSpec(format!("bounds scale must be positive, got {scale}")));
    }
    let h0 = truth[0].altitude();
    let (h_min, h_max) = match mode {
        AltitudeMode::Relative => {
            let ex = scale * max_abs(truth.iter().map(|g| g.altitude() - h0));
            (h0 - ex, h0 + ex)
        }
        AltitudeMode::Absolute => {
            let ex = scale * max_abs(truth.iter().map(|g| g.altitude()));
            (-ex, ex)
        }
    };
    let roll = scale * max_abs(truth.iter().map(|g| g.euler.x));
    let pitch = scale * max_abs(truth.iter().map(|g| g.euler.y));
    let b = EnvelopeBounds {
        h_min,
        h_max,
        roll_min: -roll,
        roll_max: roll,
        pitch_min: -pitch,
        pitch_max: pitch,
        v_max,
    };
    b.validate()?;
    Ok(b)
}
