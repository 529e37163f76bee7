//! Configuration, experiment orchestration and run manifests behind the
//! `fsbe` command line.

pub mod config;
mod experiments;
pub mod output;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use config::{load_config, validate, ExperimentParams, RunConfig, ValidationReport};
pub use output::{read_csv, sha256_hex, FileRecord, OutputDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Invariant,
    Mixing,
    Steer,
    Feller,
    Hitting,
    Bounds,
    CheckEstimates,
    CovarianceTest,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Simulate,
        Experiment::Invariant,
        Experiment::Mixing,
        Experiment::Steer,
        Experiment::Feller,
        Experiment::Hitting,
        Experiment::Bounds,
        Experiment::CheckEstimates,
        Experiment::CovarianceTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Invariant => "invariant",
            Experiment::Mixing => "mixing",
            Experiment::Steer => "steer",
            Experiment::Feller => "feller",
            Experiment::Hitting => "hitting",
            Experiment::Bounds => "bounds",
            Experiment::CheckEstimates => "check-estimates",
            Experiment::CovarianceTest => "covariance-test",
        }
    }

    /// Experiments whose interpretation needs `inf |g| > 0`.
    pub fn needs_nondegenerate_noise(self) -> bool {
        matches!(self, Experiment::Invariant | Experiment::Mixing | Experiment::Steer)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown experiment `{s}`")))
    }
}

/// Everything needed to reproduce a run, plus what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Fully resolved configuration, defaults included.
    pub resolved_config: String,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml_str(&self.resolved_config)
    }
}

/// Result of a completed run. `failures` lists assertion-class problems
/// (a supplied constant violated, a self-test outside its tolerance).
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Process exit status for a run result.
pub fn exit_code(result: &Result<RunOutcome>) -> i32 {
    match result {
        Ok(o) if o.passed() => EXIT_OK,
        Ok(_) => EXIT_ASSERTION,
        Err(Error::Usage(_)) => EXIT_USAGE,
        Err(Error::Parse(_) | Error::Hypothesis { .. } | Error::Domain(_) | Error::Divergence(_)) => EXIT_CONFIG,
        Err(_) => EXIT_RUNTIME,
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Validates `cfg`, runs `experiment` and writes its artifacts, `summary.json`
/// and `manifest.json` into `out`.
pub fn run_experiment(experiment: Experiment, cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let report = validate(cfg, experiment)?;
    let resolved = cfg.to_toml_string()?;
    let config_hash = sha256_hex(resolved.as_bytes());
    let started_unix = unix_now();
    let mut dir = OutputDir::create(out)?;
    let (results, failures) = experiments::dispatch(experiment, cfg, &mut dir)?;
    let summary = serde_json::json!({
        "experiment": experiment.name(),
        "seed": cfg.run.seed,
        "config_hash": config_hash,
        "validation": report,
        "results": results,
        "failures": failures,
    });
    dir.write_json("summary.json", &summary)?;
    let manifest = RunManifest {
        experiment,
        config_hash,
        seed: cfg.run.seed,
        workers: cfg.run.workers,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix,
        finished_unix: unix_now(),
        resolved_config: resolved,
        files: dir.files().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;
    Ok(RunOutcome { manifest, failures })
}

/// Re-runs the experiment recorded in `manifest` into `out` and reports every
/// output whose bytes differ from the recorded hash as a failure.
pub fn rerun_manifest(manifest: &RunManifest, out: &Path) -> Result<RunOutcome> {
    let cfg = manifest.config()?;
    let mut outcome = run_experiment(manifest.experiment, &cfg, out)?;
    for old in &manifest.files {
        match outcome.manifest.files.iter().find(|f| f.name == old.name) {
            Some(new) if new.sha256 == old.sha256 => {}
            Some(_) => outcome.failures.push(format!("{} differs from the recorded run", old.name)),
            None => outcome.failures.push(format!("{} was not produced", old.name)),
        }
    }
    Ok(outcome)
}
