use std::io::Write;

use serde::Serialize;

use super::metrics::MetricsReport;
use super::run::{ExperimentSpec, RunCounters, RunOutput};
use super::synth::{LogMeta, TrajectoryLog};
use crate::constraints::EnvelopeBounds;
use crate::nav::slot;
use crate::Result;

/// Version of the results JSON layout.
pub const SCHEMA: u32 = 1;

/// Environment variable overriding the output directory of the CLI.
pub const OUT_DIR_ENV: &str = "DUALNAV_OUT_DIR";

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub log: LogMeta,
    pub spec: ExperimentSpec,
    pub metrics: MetricsReport,
    pub counters: RunCounters,
    pub bounds: EnvelopeBounds,
    pub window_s: (f64, f64),
}

impl RunReport {
    pub fn new(log: &TrajectoryLog, spec: &ExperimentSpec, out: &RunOutput) -> Self {
        Self {
            schema: SCHEMA,
            log: log.meta.clone(),
            spec: *spec,
            metrics: out.metrics,
            counters: out.counters,
            bounds: out.bounds,
            window_s: out.window,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

const W_SLOTS: [(&str, usize); 4] = [
    ("w_inq_h", slot::HEIGHT),
    ("w_inq_vd", slot::VEL_DOWN),
    ("w_inq_roll", slot::ROLL),
    ("w_inq_pitch", slot::PITCH),
];

/// Per-epoch errors over the scored window. Weight columns are empty unless
/// the run fused two branches.
pub fn write_epoch_csv<W: Write>(out: &RunOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "t", "err_n", "err_e", "err_d", "err_vn", "err_ve", "err_vd", "err_roll", "err_pitch",
    ];
    header.extend(W_SLOTS.iter().map(|(name, _)| *name));
    w.write_record(&header)?;
    let offset = out.epochs.len() - out.errors.len();
    for (i, e) in out.errors.iter().enumerate() {
        let mut row: Vec<String> = [e.t, e.pos.x, e.pos.y, e.pos.z, e.vel.x, e.vel.y, e.vel.z, e.roll, e.pitch]
            .iter()
            .map(f64::to_string)
            .collect();
        let weights = out.epochs[offset + i].w_inq;
        for (_, j) in W_SLOTS {
            row.push(weights.map(|v| v[j].to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| crate::NavError::Csv(e.into()))?;
    Ok(())
}
