//! `hdt`: run scenario presets or JSON configs and write CSV, JSON and SVG
//! output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdt_core::batch::run_batch;
use hdt_core::metrics::{scenario_report, ScenarioReport, PRESETS};
use hdt_core::output::{emit_csv, emit_plots, emit_report};
use hdt_core::scenario::{parse_config_file, preset, to_json};
use hdt_core::sim::{FrequencyProfile, Integrator, RunOutcome, Sampling, ScenarioSpec};
use hdt_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK: u8 = 3;
const EXIT_OUTPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "hdt", version, about = "Hybrid distribution transformer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(RunArgs),
    /// Run several scenarios side by side, one output set per scenario.
    Sweep(SweepArgs),
    /// Print a preset as a JSON config.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Continuous,
    Zoh,
}

#[derive(Args)]
struct Overrides {
    /// Integration step (s).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum)]
    integrator: Option<IntegratorArg>,
    /// Controller sampling: evaluated at every integrator stage, or once per
    /// step with held duties.
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    /// Two-column `t,f` CSV replacing the frequency profile.
    #[arg(long, value_name = "CSV")]
    freq_profile: Option<PathBuf>,
    /// Evaluate the scenario criteria and exit with status 3 on failure.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS), conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Time-series CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON criteria report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Prefix for SVG plots (`<prefix>_<panel>.svg`).
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Preset names or config paths.
    #[arg(required = true)]
    scenarios: Vec<String>,
    /// Directory for `<name>.csv`, `<name>.json` and plots.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    overrides: Overrides,
}

/// Failure carrying the process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn config_failure(e: Error) -> Failure {
    Failure::new(EXIT_CONFIG, format!("config error: {e}"))
}

fn output_failure(path: &Path, e: Error) -> Failure {
    Failure::new(EXIT_OUTPUT, format!("cannot write {}: {e}", path.display()))
}

fn load(source: &str) -> Result<ScenarioSpec, Failure> {
    if PRESETS.contains(&source) {
        preset(source).map_err(config_failure)
    } else {
        parse_config_file(source).map_err(config_failure)
    }
}

fn apply(spec: &mut ScenarioSpec, o: &Overrides) -> Result<(), Failure> {
    if let Some(dt) = o.dt {
        spec.dt = dt;
    }
    if let Some(i) = o.integrator {
        spec.integrator = match i {
            IntegratorArg::Euler => Integrator::Euler,
            IntegratorArg::Rk4 => Integrator::Rk4,
        };
    }
    if let Some(s) = o.sampling {
        spec.sampling = match s {
            SamplingArg::Continuous => Sampling::Continuous,
            SamplingArg::Zoh => Sampling::ZeroOrderHold,
        };
    }
    if let Some(path) = &o.freq_profile {
        spec.freq_profile = FrequencyProfile::from_csv_path(path).map_err(config_failure)?;
    }
    spec.validate().map_err(config_failure)
}

struct Outputs<'a> {
    csv: Option<&'a Path>,
    report: Option<&'a Path>,
    plot: Option<&'a Path>,
    check: bool,
}

/// Writes the requested outputs for one finished run and maps the outcome to
/// an exit status.
fn finish(spec: &ScenarioSpec, outcome: &RunOutcome, out: &Outputs) -> Result<(), Failure> {
    if let Some(path) = out.csv {
        if !outcome.records.is_empty() {
            emit_csv(&outcome.records, path).map_err(|e| output_failure(path, e))?;
        }
    }
    if let Some(prefix) = out.plot {
        if !outcome.records.is_empty() {
            emit_plots(&outcome.records, prefix).map_err(|e| output_failure(prefix, e))?;
        }
    }
    let report: Option<ScenarioReport> = if out.check || out.report.is_some() {
        Some(scenario_report(&outcome.records, spec).map_err(config_failure)?)
    } else {
        None
    };
    if let (Some(path), Some(report)) = (out.report, &report) {
        emit_report(report, path).map_err(|e| output_failure(path, e))?;
    }
    if let Some(e) = &outcome.error {
        let code = match e {
            Error::Divergence { .. } => EXIT_DIVERGED,
            _ => EXIT_CONFIG,
        };
        return Err(Failure::new(code, format!("{}: {e}", spec.name)));
    }
    if let Some(report) = report {
        for e in &report.entries {
            let measured = e.measured.map_or("n/a".to_owned(), |m| format!("{m:.6}"));
            let status = if e.pass { "pass" } else { "FAIL" };
            eprintln!("{}: {status} {} = {measured} ({:?} {})", spec.name, e.name, e.bound, e.threshold);
        }
        if out.check && !report.overall {
            return Err(Failure::new(EXIT_CHECK, format!("{}: criteria not met", spec.name)));
        }
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut spec = match (&args.scenario, &args.config) {
        (Some(name), _) => load(name)?,
        (None, Some(path)) => parse_config_file(path).map_err(config_failure)?,
        (None, None) => return Err(Failure::new(EXIT_CONFIG, "either --scenario or --config is required")),
    };
    apply(&mut spec, &args.overrides)?;
    let outcome = hdt_core::sim::run_partial(&spec);
    finish(
        &spec,
        &outcome,
        &Outputs {
            csv: args.out.as_deref(),
            report: args.report.as_deref(),
            plot: args.plot.as_deref(),
            check: args.overrides.check,
        },
    )
}

fn stem(source: &str) -> String {
    Path::new(source)
        .file_stem()
        .map_or_else(|| source.to_owned(), |s| s.to_string_lossy().into_owned())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut specs = Vec::new();
    for source in &args.scenarios {
        let mut spec = load(source)?;
        apply(&mut spec, &args.overrides)?;
        specs.push(spec);
    }
    let stems: Vec<String> = args.scenarios.iter().map(|s| stem(s)).collect();
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = stems.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(Failure::new(EXIT_CONFIG, format!("two scenarios would both write `{dup}` outputs")));
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| output_failure(&args.out_dir, e.into()))?;
    let outcomes = run_batch(&specs);
    let mut worst: Option<Failure> = None;
    for ((spec, outcome), stem) in specs.iter().zip(&outcomes).zip(&stems) {
        let csv = args.out_dir.join(format!("{stem}.csv"));
        let report = args.out_dir.join(format!("{stem}.json"));
        let plot = args.out_dir.join(stem);
        let has_report = PRESETS.contains(&spec.name.as_str());
        let result = finish(
            spec,
            outcome,
            &Outputs {
                csv: Some(&csv),
                report: has_report.then_some(report.as_path()),
                plot: args.plot.then_some(plot.as_path()),
                check: args.overrides.check,
            },
        );
        match result {
            Ok(()) => eprintln!("{stem}: done"),
            Err(f) => {
                eprintln!("{}", f.message);
                if worst.as_ref().is_none_or(|w| f.code > w.code) {
                    worst = Some(f);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Preset { name } => preset(name)
            .and_then(|s| to_json(&s))
            .map(|json| println!("{json}"))
            .map_err(config_failure),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
