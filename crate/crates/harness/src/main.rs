use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roughflow::variation::{localized_p_variation, p_variation};
use roughflow::{Control, Localization};
use roughflow_harness::{
    run_experiment, write_report, ExperimentConfig, ExperimentKind, HarnessError, Result,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "roughflow",
    version,
    about = "Rough Euler experiments and path-variation tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[command(rename_all = "snake_case")]
enum Command {
    /// Piecewise-linear lifts against the full lift, per driver mesh.
    WongZakai(RunArgs),
    /// Perturbations of the initial vorticity, noise fields and driver.
    Stability(RunArgs),
    /// Steady and translated shear flows with known solutions.
    SteadyCheck(RunArgs),
    /// Localized variation of the weak remainder under grid refinement.
    RemainderScan(RunArgs),
    /// Paired flows against the evaluated stability estimate.
    FlowConvergence(RunArgs),
    /// p-variation of the path in a CSV file, printed as JSON.
    Pvar(PvarArgs),
    /// Prints the default configuration of an experiment.
    Template { experiment: ExperimentKind },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; the built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Runs a single seed instead of the configured ones.
    #[arg(long)]
    seed: Option<u64>,
    /// Root of the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PvarArgs {
    /// Samples, one row per node; a leading `t` or `time` column is the time grid.
    csv: PathBuf,
    #[arg(long)]
    p: f64,
    /// Restricts partitions to cells with `scale |t-s|^EXP <= L`, given as `interval:EXP[:SCALE]`.
    #[arg(long)]
    localize: Option<String>,
    /// Localization threshold.
    #[arg(long = "L", requires = "localize")]
    threshold: Option<f64>,
}

#[derive(Serialize)]
struct PvarOutput {
    value: f64,
    argmax_partition: Vec<usize>,
}

fn read_samples(path: &Path) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let timed = matches!(headers.get(0), Some("t" | "time"));
    let dim = headers.len() - usize::from(timed);
    if dim == 0 {
        return Err(HarnessError::Config(
            "the path file has no coordinate columns".into(),
        ));
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record?;
        let parsed: Vec<f64> = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| HarnessError::Config(format!("bad number `{s}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if parsed.len() != headers.len() {
            return Err(HarnessError::Config("rows have differing lengths".into()));
        }
        if timed {
            times.push(parsed[0]);
        }
        values.extend_from_slice(&parsed[usize::from(timed)..]);
    }
    let n = values.len() / dim;
    if !timed {
        times = (0..n)
            .map(|k| {
                if n > 1 {
                    k as f64 / (n - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
    }
    Ok((times, dim, values))
}

fn parse_localization(spec: &str, times: Vec<f64>, threshold: f64) -> Result<Localization> {
    let parts: Vec<&str> = spec.split(':').collect();
    let number = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| HarnessError::Config(format!("bad localization `{spec}`: {e}")))
    };
    let control = match parts.as_slice() {
        ["interval", exp] => Control::interval_power(times, number(exp)?, 1.0),
        ["interval", exp, scale] => Control::interval_power(times, number(exp)?, number(scale)?),
        _ => {
            return Err(HarnessError::Config(format!(
                "localization `{spec}` is not of the form interval:EXP[:SCALE]"
            )))
        }
    };
    Ok(Localization::new(control, threshold)?)
}

fn pvar(args: &PvarArgs) -> Result<PvarOutput> {
    let (times, dim, values) = read_samples(&args.csv)?;
    let v = match &args.localize {
        None => p_variation(&values, dim, args.p)?,
        Some(spec) => {
            let threshold = args
                .threshold
                .ok_or_else(|| HarnessError::Config("--localize needs --L".into()))?;
            let n = times.len();
            let loc = parse_localization(spec, times, threshold)?;
            let magnitude = |s: usize, t: usize| {
                values[s * dim..(s + 1) * dim]
                    .iter()
                    .zip(&values[t * dim..(t + 1) * dim])
                    .map(|(a, b)| (b - a) * (b - a))
                    .sum::<f64>()
                    .sqrt()
            };
            localized_p_variation(n, magnitude, args.p, &loc)?
        }
    };
    Ok(PvarOutput {
        value: v.value,
        argmax_partition: v.partition,
    })
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<bool> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk(kind),
    };
    if config.experiment != kind {
        return Err(HarnessError::WrongExperiment {
            expected: kind.to_string(),
            found: config.experiment.to_string(),
        });
    }
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    let report = run_experiment(&config)?;
    let root = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("run"));
    let dir = write_report(&report, &config, &root)?;
    for check in &report.checks {
        println!(
            "{} {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    println!("wrote {}", dir.display());
    Ok(report.passed())
}

fn execute(cli: Cli) -> Result<bool> {
    let (kind, args) = match cli.command {
        Command::WongZakai(a) => (ExperimentKind::WongZakai, a),
        Command::Stability(a) => (ExperimentKind::Stability, a),
        Command::SteadyCheck(a) => (ExperimentKind::SteadyCheck, a),
        Command::RemainderScan(a) => (ExperimentKind::RemainderScan, a),
        Command::FlowConvergence(a) => (ExperimentKind::FlowConvergence, a),
        Command::Pvar(a) => {
            println!("{}", serde_json::to_string(&pvar(&a)?)?);
            return Ok(true);
        }
        Command::Template { experiment } => {
            println!("{}", ExperimentConfig::desk(experiment).to_json()?);
            return Ok(true);
        }
    };
    run(kind, &args)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
