//! `fhlab`: prediction-vs-simulation experiments for linear statistics of
//! the stationary Hermitian OU matrix process.
//!
//! Exit codes: 0 all rows pass, 1 tolerance failure, 2 configuration error,
//! 3 runtime error.

use clap::{Parser, Subcommand};
use fhlab_core::harness::{exit_code, run_experiment, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fhlab",
    version,
    about = "Numerical laboratory for space-time eigenvalue statistics of the Hermitian OU process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Predict,
    Simulate,
    Compare,
    Kernel,
    Gmc,
    Maxstat,
    Selftest,
}

#[derive(Parser)]
struct RunArgs {
    /// Path to the JSON experiment configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed from the config (FHLAB_SEED also overrides it)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (results are worker-count independent)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for report.json / report.csv / plotdata
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form predictions for a charge over a size sweep
    Predict(RunArgs),
    /// Monte Carlo joint moments only
    Simulate(RunArgs),
    /// Prediction vs Monte Carlo with pass/fail rows
    Compare(RunArgs),
    /// Kernel identity and decay checks
    Kernel(RunArgs),
    /// Chaos-measure and field checks
    Gmc(RunArgs),
    /// Max-statistic trend sweep
    Maxstat(RunArgs),
    /// Fast invariant suite (built-in config unless one is given)
    Selftest(RunArgs),
}

impl Command {
    fn split(self) -> (Kind, RunArgs) {
        match self {
            Command::Predict(a) => (Kind::Predict, a),
            Command::Simulate(a) => (Kind::Simulate, a),
            Command::Compare(a) => (Kind::Compare, a),
            Command::Kernel(a) => (Kind::Kernel, a),
            Command::Gmc(a) => (Kind::Gmc, a),
            Command::Maxstat(a) => (Kind::Maxstat, a),
            Command::Selftest(a) => (Kind::Selftest, a),
        }
    }
}

fn kind_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Predict => "predict",
        Kind::Simulate => "simulate",
        Kind::Compare => "compare",
        Kind::Kernel => "kernel",
        Kind::Gmc => "gmc",
        Kind::Maxstat => "maxstat",
        Kind::Selftest => "selftest",
    }
}

fn load_config(kind: Kind, args: &RunArgs) -> Result<ExperimentConfig, (i32, String)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (2, format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| (2, e.to_string()))?
        }
        None if kind == Kind::Selftest => ExperimentConfig::Selftest { seed: 0 },
        None => return Err((2, "--config is required for this subcommand".into())),
    };
    if cfg.kind_name() != kind_name(kind) {
        return Err((
            2,
            format!(
                "config declares experiment '{}' but the subcommand is '{}'",
                cfg.kind_name(),
                kind_name(kind)
            ),
        ));
    }
    // precedence: --seed flag, then FHLAB_SEED, then the config value
    if let Some(seed) = args.seed {
        cfg = cfg.with_seed(seed);
    } else if let Ok(env_seed) = std::env::var("FHLAB_SEED") {
        let parsed: u64 = env_seed
            .parse()
            .map_err(|_| (2, format!("FHLAB_SEED must be a u64, got '{env_seed}'")))?;
        cfg = cfg.with_seed(parsed);
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();

    if let Some(workers) = args.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("fhlab: cannot configure {workers} workers: {e}");
            return ExitCode::from(3);
        }
    }

    let config = match load_config(kind, &args) {
        Ok(c) => c,
        Err((code, msg)) => {
            eprintln!("fhlab: config error: {msg}");
            return ExitCode::from(code as u8);
        }
    };

    match run_experiment(&config, args.out.as_deref()) {
        Ok(report) => {
            for row in &report.rows {
                let status = match row.pass {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "    ",
                };
                let detail = match (row.predicted, row.mc_mean, row.mc_stderr) {
                    (Some(p), Some(m), Some(s)) => {
                        format!("predicted {p:.6} measured {m:.6} (stderr {s:.2e})")
                    }
                    (Some(p), _, _) => format!("predicted {p:.6}"),
                    (_, Some(m), _) => format!("value {m:.6e}"),
                    _ => String::new(),
                };
                println!("[{status}] {} {detail}", row.label);
            }
            println!(
                "fhlab {}: {} rows in {:.1}s (seed {})",
                report.metadata.experiment,
                report.rows.len(),
                report.metadata.runtime_seconds,
                report.metadata.seed
            );
            ExitCode::from(exit_code(&report) as u8)
        }
        Err(e) => {
            eprintln!("fhlab: {e}");
            ExitCode::from(3)
        }
    }
}
