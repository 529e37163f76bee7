use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fsbe_core::harness::{
    exit_code, load_config, rerun_manifest, run_experiment, Experiment, RunConfig, RunManifest, RunOutcome,
};
use fsbe_core::Result;

#[derive(Parser)]
#[command(name = "fsbe", version, about = "Fractional stochastic Burgers simulator and ergodicity lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML configuration; omitted sections take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory: trajectory.csv
    Simulate(RunArgs),
    /// Empirical invariant measures: measure_<obs>.csv
    Invariant(RunArgs),
    /// Autocorrelation and branching mixing statistic
    Mixing(RunArgs),
    /// Steered hitting frequency of B(y, eps)
    Steer(RunArgs),
    /// Strong-Feller modulus along shrinking distances
    Feller(RunArgs),
    /// Hitting frequency and exit-time tail
    Hitting(RunArgs),
    /// Moment-bound series and gamma_0 search
    Bounds(RunArgs),
    /// Energy, smoothing, bilinear and Lyapunov checks along one path
    CheckEstimates(RunArgs),
    /// Space-time white noise covariance self-test
    CovarianceTest(RunArgs),
    /// Re-run a manifest and compare output hashes
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "rerun")]
        out: PathBuf,
    },
}

fn prepare(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.run.workers = w;
    }
    Ok(cfg)
}

fn run(command: Command) -> Result<RunOutcome> {
    let (experiment, args) = match command {
        Command::Rerun { manifest, out } => return rerun_manifest(&RunManifest::load(&manifest)?, &out),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Invariant(a) => (Experiment::Invariant, a),
        Command::Mixing(a) => (Experiment::Mixing, a),
        Command::Steer(a) => (Experiment::Steer, a),
        Command::Feller(a) => (Experiment::Feller, a),
        Command::Hitting(a) => (Experiment::Hitting, a),
        Command::Bounds(a) => (Experiment::Bounds, a),
        Command::CheckEstimates(a) => (Experiment::CheckEstimates, a),
        Command::CovarianceTest(a) => (Experiment::CovarianceTest, a),
    };
    let cfg = prepare(&args)?;
    run_experiment(experiment, &cfg, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli.command);
    match &result {
        Ok(o) => {
            println!("wrote {} files (config {})", o.manifest.files.len() + 1, &o.manifest.config_hash[..12]);
            for f in &o.failures {
                eprintln!("FAIL: {f}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
