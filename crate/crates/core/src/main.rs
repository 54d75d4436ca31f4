use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fieldmax::config::{parse_config_for, ExperimentConfig, ExperimentKind};
use fieldmax::runner::{run_experiment, write_outputs};
use fieldmax::Error;

/// Joint maxima of 2D random fields with missing observations.
#[derive(Parser)]
#[command(name = "fieldmax", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate of the joint maxima probability.
    Simulate(Common),
    /// Logarithmic-average (almost sure) estimator along single paths.
    Asclt(Common),
    /// Levels u, v matching the exceedance targets.
    Calibrate(Common),
    /// Dependence-condition diagnostics over a shape ladder.
    Diagnose(Common),
    /// Limit value E[exp(−λκ − (1−λ)τ)].
    Limit(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads` in the config).
    #[arg(long)]
    threads: Option<usize>,
}

fn load(kind: ExperimentKind, args: &Common) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = parse_config_for(&text, Some(kind))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = Some(out.clone());
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::InvalidValue { key: "threads".into(), message: "must be positive".into() });
        }
        config.threads = Some(t);
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig) -> Result<serde_json::Value, Error> {
    if let Some(t) = config.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| Error::Io(e.to_string()))?;
    }
    let output = run_experiment(config)?;
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let files = write_outputs(&output, &dir)?;
    Ok(json!({
        "experiment": config.experiment,
        "config_digest": config.digest(),
        "records": output.results.records(),
        "files": files,
    }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Asclt(a) => (ExperimentKind::Asclt, a),
        Command::Calibrate(a) => (ExperimentKind::Calibrate, a),
        Command::Diagnose(a) => (ExperimentKind::Diagnose, a),
        Command::Limit(a) => (ExperimentKind::Limit, a),
    };
    let mut digest = None;
    let result = load(kind, args).and_then(|config| {
        digest = Some(config.digest());
        execute(&config)
    });
    match result {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let v = json!({ "error": e.code(), "message": e.to_string(), "config_digest": digest });
            eprintln!("{}", serde_json::to_string(&v).expect("json"));
            ExitCode::FAILURE
        }
    }
}
