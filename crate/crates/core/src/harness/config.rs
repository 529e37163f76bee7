//! TOML run configuration and hypothesis checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::ModelConfig;
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

use super::Experiment;

/// Top-level configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub run: RunSection,
    pub initial: InitialSection,
    pub hypotheses: HypothesisSection,
    pub experiment: ExperimentParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1, workers: 1 }
    }
}

/// Initial condition as leading sine coefficients; missing modes are zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub coeffs: Vec<f64>,
}

/// Declared bounds `a0 <= |g| <= b0`, checked by sampling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisSection {
    pub g_bounds: Option<[f64; 2]>,
}

/// Experiment knobs. Unused fields are ignored by experiments that do not read them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    /// Terminal time for single-horizon experiments.
    pub t_end: f64,
    pub record_every: usize,
    pub observables: Vec<String>,
    /// `T` of the empirical invariant measure / stationary path.
    pub horizon: f64,
    /// Defaults to 20% of `horizon`.
    pub burn_in: Option<f64>,
    pub stride: usize,
    pub paths: usize,
    pub windows: usize,
    pub bins: usize,
    /// Pilot-run length used to fix histogram ranges.
    pub pilot: f64,
    /// Second initial condition for the uniqueness probe.
    pub compare_initial: Option<Vec<f64>>,
    pub lags: Vec<f64>,
    pub horizons: Vec<f64>,
    pub states: usize,
    pub replicas: usize,
    pub samples: usize,
    pub target: Vec<f64>,
    pub eps: f64,
    pub steered: bool,
    pub levels: Vec<f64>,
    pub feller_observable: String,
    pub feller_direction: Vec<f64>,
    pub feller_distances: Vec<f64>,
    pub sigma: f64,
    pub p: f64,
    pub rho: f64,
    pub gammas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub beta: f64,
    pub smoothing_times: Vec<f64>,
    pub energy_c: Option<f64>,
    pub bilinear_beta: f64,
    pub bilinear_modes: Vec<usize>,
    pub covariance_times: [f64; 2],
    pub covariance_points: [f64; 2],
    pub covariance_modes: usize,
    pub covariance_samples: usize,
    /// Maximum tolerated `|empirical - exact| / std_error` in the covariance test.
    pub covariance_z: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            record_every: 10,
            observables: vec!["l2_norm".into(), "mode:1".into()],
            horizon: 100.0,
            burn_in: None,
            stride: 1,
            paths: 1,
            windows: 2,
            bins: 64,
            pilot: 20.0,
            compare_initial: None,
            lags: vec![0.0, 0.01, 0.05, 0.1, 0.2, 0.5],
            horizons: vec![0.01, 0.05, 0.2, 0.5],
            states: 20,
            replicas: 20,
            samples: 400,
            target: vec![0.5, 0.25, 0.5 / 3.0],
            eps: 0.5,
            steered: false,
            levels: vec![1.0, 2.0, 5.0, 10.0],
            feller_observable: "l2_ball:0.5".into(),
            feller_direction: vec![1.0],
            feller_distances: vec![0.4, 0.2, 0.1],
            sigma: 0.0,
            p: 2.0,
            rho: 0.1,
            gammas: vec![0.0, 10.0, 100.0, 1000.0],
            epsilons: vec![0.25, 0.1, 0.01],
            beta: 0.1,
            smoothing_times: vec![0.1, 0.2, 0.5, 1.0],
            energy_c: None,
            bilinear_beta: 0.75,
            bilinear_modes: vec![32, 64, 128],
            covariance_times: [0.5, 1.0],
            covariance_points: [0.3, 0.7],
            covariance_modes: 256,
            covariance_samples: 100_000,
            covariance_z: 4.0,
        }
    }
}

/// Sampled facts about `g` reported next to a validated config.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub g_abs_min: f64,
    pub g_abs_max: f64,
    pub g_lipschitz_estimate: f64,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// Initial condition padded or cut to the configured number of modes.
    pub fn initial_field(&self) -> Result<SpectralField> {
        pad(&self.initial.coeffs, self.model.modes)
    }

    pub fn burn_in(&self) -> f64 {
        self.experiment.burn_in.unwrap_or(0.2 * self.experiment.horizon)
    }
}

pub(crate) fn pad(coeffs: &[f64], n: usize) -> Result<SpectralField> {
    let mut c = coeffs.to_vec();
    c.resize(n, 0.0);
    SpectralField::from_coeffs(c)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml_str(&text)
}

const SAMPLES: usize = 10_000;
const RANGE: f64 = 50.0;

fn sample_g(cfg: &ModelConfig) -> ValidationReport {
    let g = &cfg.diffusion;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    let mut lip = 0.0_f64;
    let h = 2.0 * RANGE / (SAMPLES - 1) as f64;
    let mut prev: Option<f64> = None;
    for i in 0..SAMPLES {
        let x = -RANGE + h * i as f64;
        let v = g.eval(x);
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
        if let Some(p) = prev {
            lip = lip.max((v - p).abs() / h);
        }
        prev = Some(v);
    }
    let (inf, sup) = g.abs_range();
    ValidationReport {
        g_abs_min: lo.min(inf),
        g_abs_max: hi.max(sup),
        g_lipschitz_estimate: lip,
        warnings: Vec::new(),
    }
}

/// Checks the model hypotheses relevant to `experiment`.
pub fn validate(cfg: &RunConfig, experiment: Experiment) -> Result<ValidationReport> {
    let m = &cfg.model;
    if !(m.alpha > 1.5 && m.alpha < 2.0) {
        return Err(Error::Hypothesis {
            hypothesis: "3/2 < α < 2",
            detail: format!("alpha = {} (well-posedness theorem)", m.alpha),
        });
    }
    m.check_structure()?;
    if cfg.run.workers == 0 {
        return Err(Error::domain("workers must be >= 1"));
    }
    if cfg.initial.coeffs.len() > m.modes {
        return Err(Error::domain(format!(
            "initial condition has {} coefficients but the model keeps {} modes",
            cfg.initial.coeffs.len(),
            m.modes
        )));
    }
    cfg.initial_field()?;
    let mut report = sample_g(m);
    if let Some([a0, b0]) = cfg.hypotheses.g_bounds {
        if !(report.g_abs_min >= a0 && report.g_abs_max <= b0) {
            return Err(Error::Hypothesis {
                hypothesis: "|g(x)| ∈ [a0, b0]",
                detail: format!(
                    "sampled |g| spans [{}, {}], declared [{a0}, {b0}]",
                    report.g_abs_min, report.g_abs_max
                ),
            });
        }
    }
    if experiment.needs_nondegenerate_noise() && !(report.g_abs_min > 0.0) {
        return Err(Error::Hypothesis {
            hypothesis: "inf|g| > 0",
            detail: format!(
                "`{}` relies on uniqueness or Girsanov arguments, but g vanishes (min |g| = {})",
                experiment.name(),
                report.g_abs_min
            ),
        });
    }
    if !report.g_lipschitz_estimate.is_finite() {
        report.warnings.push("g does not look Lipschitz on the sampled range".into());
    }
    if m.alpha > 1.5 && (2.0 * m.alpha - 3.0) / 4.0 <= m.beta_obs {
        report.warnings.push(format!(
            "beta_obs = {} is outside the tightness range (0, (2 alpha - 3)/4)",
            m.beta_obs
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Diffusion;

    #[test]
    fn default_config_is_accepted_and_round_trips() {
        let cfg = RunConfig::default();
        let report = validate(&cfg, Experiment::Invariant).unwrap();
        assert!((report.g_abs_min - 0.5).abs() < 1e-6);
        assert!((report.g_abs_max - 1.5).abs() < 1e-6);
        assert!(report.g_lipschitz_estimate <= 0.5 + 1e-6);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn alpha_outside_range_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.model.alpha = 1.4;
        let err = validate(&cfg, Experiment::Simulate).unwrap_err();
        assert!(err.to_string().contains("3/2 < α < 2"), "{err}");
    }

    #[test]
    fn vanishing_g_rejected_for_uniqueness() {
        let mut cfg = RunConfig::default();
        cfg.model.diffusion = Diffusion::Tanh {
            offset: 0.0,
            amplitude: 1.0,
            scale: 1.0,
        };
        assert!(validate(&cfg, Experiment::Simulate).is_ok());
        let err = validate(&cfg, Experiment::Invariant).unwrap_err();
        assert!(err.to_string().contains("inf|g| > 0"), "{err}");
    }

    #[test]
    fn declared_bounds_are_checked() {
        let mut cfg = RunConfig::default();
        cfg.hypotheses.g_bounds = Some([0.6, 1.5]);
        assert!(validate(&cfg, Experiment::Simulate).is_err());
        cfg.hypotheses.g_bounds = Some([0.5, 1.5]);
        assert!(validate(&cfg, Experiment::Simulate).is_ok());
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        assert!(matches!(
            RunConfig::from_toml_str("[model]\nalpah = 1.8\n"),
            Err(Error::Parse(_))
        ));
        let cfg = RunConfig::from_toml_str("[model]\nalpha = 1.7\n[model.diffusion]\nkind = \"constant\"\nvalue = 1.0\n").unwrap();
        assert_eq!(cfg.model.alpha, 1.7);
        assert_eq!(cfg.model.diffusion.constant_value(), Some(1.0));
    }
}
