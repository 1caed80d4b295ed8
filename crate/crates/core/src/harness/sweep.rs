use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::report::SCHEMA;
use super::run::{run_variant, ExperimentSpec, RunCounters, Scenario, Variant};
use super::synth::{gen_synthetic, ImuErrorSpec, Profile, ProfileShape, SynthSpec};
use crate::nav::Vec3;
use crate::Result;

/// Seeds × scenarios × variants on one synthetic profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub profile: Profile,
    pub duration: f64,
    pub rate: f64,
    pub imu_errors: ImuErrorSpec,
    pub shape: ProfileShape,
    pub seeds: Vec<u64>,
    pub scenarios: Vec<Scenario>,
    pub variants: Vec<Variant>,
    /// Template; `scenario`, `variant` and `seed` are overwritten per run.
    pub experiment: ExperimentSpec,
}

impl SweepSpec {
    /// Hilly profile, 90 s at 100 Hz, 0.05 m/s² accelerometer bias.
    pub fn hilly(first_seed: u64, count: u64) -> Self {
        Self {
            profile: Profile::Hilly,
            duration: 90.0,
            rate: 100.0,
            imu_errors: ImuErrorSpec::mems(Vec3::repeat(0.05)),
            shape: ProfileShape::default(),
            seeds: (first_seed..first_seed + count).collect(),
            scenarios: Scenario::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            experiment: ExperimentSpec::new(Scenario::FullGnss, Variant::Ekf, first_seed),
        }
    }

    pub fn synth_spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            profile: self.profile,
            duration: self.duration,
            rate: self.rate,
            imu_errors: self.imu_errors,
            shape: self.shape,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub counters: RunCounters,
}

/// Seed-averaged metrics with the individual runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub scenario: Scenario,
    pub variant: Variant,
    pub mean: MeanMetrics,
    pub runs: Vec<SeedResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub prmse: f64,
    pub vrmse: f64,
    /// rad
    pub armse: f64,
    pub h_prmse: f64,
    pub v_prmse: f64,
    pub p95_position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: u32,
    pub spec: SweepSpec,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, scenario: Scenario, variant: Variant) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.scenario == scenario && c.variant == variant)
    }
}

fn mean(runs: &[SeedResult]) -> MeanMetrics {
    let n = runs.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| runs.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
    MeanMetrics {
        prmse: avg(|m| m.prmse),
        vrmse: avg(|m| m.vrmse),
        armse: avg(|m| m.armse),
        h_prmse: avg(|m| m.h_prmse),
        v_prmse: avg(|m| m.v_prmse),
        p95_position: avg(|m| m.p95.position),
    }
}

type Key = (Scenario, Variant);

fn run_seed(spec: &SweepSpec, seed: u64) -> Result<Vec<(Key, SeedResult)>> {
    let log = gen_synthetic(&spec.synth_spec(seed))?;
    let mut out = Vec::new();
    for &scenario in &spec.scenarios {
        for &variant in &spec.variants {
            let mut e = spec.experiment;
            e.scenario = scenario;
            e.variant = variant;
            e.seed = seed;
            let r = run_variant(&log, &e)?;
            out.push((
                (scenario, variant),
                SeedResult {
                    seed,
                    metrics: r.metrics,
                    counters: r.counters,
                },
            ));
        }
    }
    Ok(out)
}

/// Runs every cell. Seeds execute on separate threads; results are gathered
/// in seed order so the report does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    let per_seed: Vec<Result<Vec<(Key, SeedResult)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = spec
            .seeds
            .iter()
            .map(|&seed| scope.spawn(move || run_seed(spec, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let mut grouped: BTreeMap<Key, Vec<SeedResult>> = BTreeMap::new();
    for seed_runs in per_seed {
        for (key, r) in seed_runs? {
            grouped.entry(key).or_default().push(r);
        }
    }
    let cells = grouped
        .into_iter()
        .map(|((scenario, variant), runs)| SweepCell {
            scenario,
            variant,
            mean: mean(&runs),
            runs,
        })
        .collect();
    Ok(SweepReport {
        schema: SCHEMA,
        spec: spec.clone(),
        cells,
    })
}

/// Plain-text comparison table, one block per scenario.
pub fn render_table(report: &SweepReport) -> String {
    let mut s = String::new();
    for scenario in Scenario::ALL {
        let cells: Vec<_> = report.cells.iter().filter(|c| c.scenario == scenario).collect();
        if cells.is_empty() {
            continue;
        }
        s.push_str(&format!("{scenario} ({} seeds)\n", report.spec.seeds.len()));
        s.push_str(&format!(
            "{:<8} {:>9} {:>9} {:>11} {:>9} {:>9} {:>9}\n",
            "variant", "PRMSE", "VRMSE", "ARMSE[deg]", "h-PRMSE", "v-PRMSE", "p95"
        ));
        for c in cells {
            let m = &c.mean;
            s.push_str(&format!(
                "{:<8} {:>9.3} {:>9.3} {:>11.3} {:>9.3} {:>9.3} {:>9.3}\n",
                c.variant.to_string(),
                m.prmse,
                m.vrmse,
                m.armse.to_degrees(),
                m.h_prmse,
                m.v_prmse,
                m.p95_position
            ));
        }
        s.push('\n');
    }
    s
}
