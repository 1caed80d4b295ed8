//! Experiment harness: synthetic trajectories, GNSS simulation, the four
//! filter variants, error metrics, and result reporting.

pub mod bounds;
pub mod log;
pub mod metrics;
pub mod report;
pub mod run;
pub mod sweep;
pub mod synth;

pub use bounds::{derive_bounds, AltitudeMode};
pub use metrics::{compute_metrics, percentile, summarize, EpochError, MetricsReport, Percentiles};
pub use run::{run_variant, ExperimentSpec, FilterTuning, InitErrors, RunCounters, RunOutput, Scenario, Variant};
pub use synth::{
    corrupt_gnss, gen_synthetic, ImuErrorSpec, LogMeta, Profile, ProfileShape, SynthSpec, TrajectoryLog, TruthSample,
};
