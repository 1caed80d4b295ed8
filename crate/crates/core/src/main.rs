use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dualnav::fusion::FusionRule;
use dualnav::harness::log::{convert_file, read_log_file, write_log, write_log_file, ConvertOptions};
use dualnav::harness::report::{to_json, write_epoch_csv, RunReport, OUT_DIR_ENV};
use dualnav::harness::sweep::{render_table, run_sweep, SweepSpec};
use dualnav::harness::{
    gen_synthetic, run_variant, AltitudeMode, ExperimentSpec, ImuErrorSpec, Profile, ProfileShape, Scenario,
    SynthSpec, TrajectoryLog, Variant,
};
use dualnav::nav::Vec3;
use dualnav::NavError;

#[derive(Parser)]
#[command(name = "dualnav", version, about = "Dual-branch INS/GNSS filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic log, or re-emit an existing one with --dump.
    Gen(GenArgs),
    /// Run one variant on one scenario.
    Run(RunArgs),
    /// Run every variant on both scenarios over several seeds.
    Sweep(SweepArgs),
    /// Convert an external CSV export into the canonical log format.
    Convert(ConvertArgs),
}

#[derive(Args, Clone)]
struct SynthArgs {
    #[arg(long, default_value = "hilly")]
    profile: Profile,
    #[arg(long, default_value_t = 90.0)]
    duration: f64,
    /// IMU rate, Hz.
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    /// Accelerometer bias on each axis, m/s².
    #[arg(long, default_value_t = 0.05)]
    accel_bias: f64,
    /// Gyro bias on each axis, rad/s.
    #[arg(long, default_value_t = 1e-4)]
    gyro_bias: f64,
    /// Accelerometer white-noise density, m/s/√s.
    #[arg(long, default_value_t = 0.01)]
    accel_noise: f64,
    /// Gyro white-noise density, rad/√s.
    #[arg(long, default_value_t = 1e-3)]
    gyro_noise: f64,
    /// Hill amplitude of the hilly profile, m.
    #[arg(long)]
    hill_amplitude: Option<f64>,
    /// Sideslip amplitude, rad.
    #[arg(long)]
    slip: Option<f64>,
    /// Body pitch offset amplitude, rad.
    #[arg(long)]
    squat: Option<f64>,
}

impl SynthArgs {
    fn imu_errors(&self) -> ImuErrorSpec {
        ImuErrorSpec {
            accel_bias: Vec3::repeat(self.accel_bias),
            gyro_bias: Vec3::repeat(self.gyro_bias),
            accel_noise: self.accel_noise,
            gyro_noise: self.gyro_noise,
        }
    }

    fn shape(&self) -> ProfileShape {
        let mut s = ProfileShape::default();
        if let Some(v) = self.hill_amplitude {
            s.hill_amplitude = v;
        }
        if let Some(v) = self.slip {
            s.slip_amplitude = v;
        }
        if let Some(v) = self.squat {
            s.squat_amplitude = v;
        }
        s
    }

    fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            profile: self.profile,
            duration: self.duration,
            rate: self.rate,
            imu_errors: self.imu_errors(),
            shape: self.shape(),
            seed,
        }
    }
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// GNSS noise standard deviation per axis, m.
    #[arg(long, default_value_t = 3.5)]
    gnss_std: f64,
    /// GNSS fix rate, Hz.
    #[arg(long, default_value_t = 1.0)]
    gnss_rate: f64,
    #[arg(long, default_value_t = 60.0)]
    init_s: f64,
    #[arg(long, default_value_t = 30.0)]
    outage_s: f64,
    #[arg(long, default_value_t = 2.0)]
    bounds_scale: f64,
    /// Forward speed cap, m/s.
    #[arg(long, default_value_t = 50.0 / 3.6)]
    v_max: f64,
    #[arg(long, default_value = "relative", value_parser = parse_altitude_mode)]
    altitude_mode: AltitudeMode,
    /// Fusion weight rule: normalized or literal.
    #[arg(long, default_value = "normalized", value_parser = parse_fusion_rule)]
    fusion_rule: FusionRule,
}

fn parse_altitude_mode(s: &str) -> Result<AltitudeMode, String> {
    s.parse().map_err(|e: NavError| e.to_string())
}

fn parse_fusion_rule(s: &str) -> Result<FusionRule, String> {
    match s {
        "normalized" => Ok(FusionRule::Normalized),
        "literal" => Ok(FusionRule::Literal),
        other => Err(format!("unknown fusion rule '{other}'")),
    }
}

impl ExperimentArgs {
    fn apply(&self, spec: &mut ExperimentSpec) {
        spec.gnss_noise_std = self.gnss_std;
        spec.gnss_rate = self.gnss_rate;
        spec.init_s = self.init_s;
        spec.outage_s = self.outage_s;
        spec.bounds_scale = self.bounds_scale;
        spec.v_max = self.v_max;
        spec.altitude_mode = self.altitude_mode;
        spec.fusion_rule = self.fusion_rule;
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Read this log and write it back in canonical form instead of generating.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "DUAL")]
    variant: Variant,
    #[arg(long, default_value = "full-gnss")]
    scenario: Scenario,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Canonical log with ground truth; a synthetic log is generated when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Directory for results JSON and per-epoch CSV (overrides DUALNAV_OUT_DIR).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// First seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Attitude columns are in degrees.
    #[arg(long)]
    degrees: bool,
}

fn out_dir(flag: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
}

fn write_file(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn emit_log(log: &TrajectoryLog, out: &Option<PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(p) => write_log_file(log, p)?,
        None => write_log(log, std::io::stdout().lock())?,
    }
    Ok(())
}

fn gen(args: GenArgs) -> anyhow::Result<()> {
    let log = match &args.dump {
        Some(path) => read_log_file(path)?,
        None => gen_synthetic(&args.synth.spec(args.seed))?,
    };
    emit_log(&log, &args.out)
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let log = match &args.log {
        Some(p) => read_log_file(p)?,
        None => gen_synthetic(&args.synth.spec(args.seed))?,
    };
    let mut spec = ExperimentSpec::new(args.scenario, args.variant, args.seed);
    args.experiment.apply(&mut spec);
    let out = run_variant(&log, &spec)?;
    let json = to_json(&RunReport::new(&log, &spec, &out))?;
    if let Some(dir) = out_dir(&args.out_dir) {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let stem = format!("{}_{}_{}_seed{}", log.meta.name, spec.variant, spec.scenario, spec.seed);
        write_file(&dir.join(format!("{stem}.json")), json.as_bytes())?;
        let mut csv = Vec::new();
        write_epoch_csv(&out, &mut csv)?;
        write_file(&dir.join(format!("{stem}_epochs.csv")), &csv)?;
    }
    std::io::stdout().lock().write_all(json.as_bytes())?;
    Ok(())
}

fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut spec = SweepSpec::hilly(args.seed, args.seeds);
    spec.profile = args.synth.profile;
    spec.duration = args.synth.duration;
    spec.rate = args.synth.rate;
    spec.imu_errors = args.synth.imu_errors();
    spec.shape = args.synth.shape();
    args.experiment.apply(&mut spec.experiment);
    let report = run_sweep(&spec)?;
    let json = to_json(&report)?;
    let table = render_table(&report);
    if let Some(dir) = out_dir(&args.out_dir) {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("sweep.json"), json.as_bytes())?;
        write_file(&dir.join("sweep_table.txt"), table.as_bytes())?;
    }
    eprint!("{table}");
    std::io::stdout().lock().write_all(json.as_bytes())?;
    Ok(())
}

fn convert(args: ConvertArgs) -> anyhow::Result<()> {
    let log = convert_file(&args.input, ConvertOptions { degrees: args.degrees })?;
    emit_log(&log, &args.out)
}

fn report_error(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            report_error("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Convert(a) => convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<NavError>().map_or("io", NavError::kind);
            report_error(kind, &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
