//! Monte Carlo probes of the transition semigroup: empirical invariant
//! measures, mixing, strong-Feller moduli, hitting and exit frequencies.
//!
//! Path `i` of an ensemble always draws from stream `family + i`, so every
//! estimate is a deterministic function of `(config, seed)` whatever the worker
//! count.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dynamics::{GirsanovWeight, Integrator, ModelConfig, SteeringPlan};
use crate::ensemble::par_map;
use crate::error::{Error, Result};
use crate::noise::{family, RngStream};
use crate::spectral::{sobolev_norm, SobolevIndex, SpectralBasis, SpectralField};

/// Scalar functional of the state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    L2Norm,
    L2NormSq,
    /// Projection `<u, e_k>`.
    Mode { k: usize },
    /// `|A^{beta} u|^2`.
    HbetaNormSq { beta: f64 },
    /// Max of `|u|` on the collocation grid.
    SupGrid,
    /// `1{|u|_{L^2} <= radius}`.
    L2Ball { radius: f64 },
    Constant { value: f64 },
}

/// An observable with optional clipping to `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub clip: Option<(f64, f64)>,
}

impl Observable {
    pub fn new(kind: ObservableKind) -> Self {
        Self { kind, clip: None }
    }

    pub fn clipped(self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::domain(format!("clip range must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self {
            clip: Some((lo, hi)),
            ..self
        })
    }

    /// File-name safe identifier.
    pub fn name(&self) -> String {
        match self.kind {
            ObservableKind::L2Norm => "l2_norm".into(),
            ObservableKind::L2NormSq => "l2_norm_sq".into(),
            ObservableKind::Mode { k } => format!("mode{k}"),
            ObservableKind::HbetaNormSq { beta } => format!("hbeta_sq_{beta}"),
            ObservableKind::SupGrid => "sup_grid".into(),
            ObservableKind::L2Ball { radius } => format!("l2_ball_{radius}"),
            ObservableKind::Constant { value } => format!("const_{value}"),
        }
    }

    pub fn eval(&self, u: &SpectralField, basis: &SpectralBasis) -> f64 {
        let raw = match self.kind {
            ObservableKind::L2Norm => u.l2_norm(),
            ObservableKind::L2NormSq => u.l2_norm_sq(),
            ObservableKind::Mode { k } => u.coeffs().get(k.wrapping_sub(1)).copied().unwrap_or(0.0),
            ObservableKind::HbetaNormSq { beta } => sobolev_norm(u, SobolevIndex::hilbert(2.0 * beta), None)
                .map(|n| n * n)
                .unwrap_or(f64::NAN),
            ObservableKind::SupGrid => basis.synthesize(u.coeffs()).iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            ObservableKind::L2Ball { radius } => f64::from(u.l2_norm() <= radius),
            ObservableKind::Constant { value } => value,
        };
        self.clamp(raw)
    }

    fn clamp(&self, v: f64) -> f64 {
        match self.clip {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    fn constant(&self) -> Option<f64> {
        match self.kind {
            ObservableKind::Constant { value } => Some(self.clamp(value)),
            _ => None,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Parses `l2_norm`, `l2_norm_sq`, `mode:K`, `hbeta_sq:B`, `sup_grid`,
/// `l2_ball:R` or `const:C`, optionally followed by `@lo..hi` for clipping.
impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (body, clip) = match s.split_once('@') {
            Some((b, c)) => (b, Some(c)),
            None => (s, None),
        };
        let (head, arg) = match body.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (body.trim(), None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Parse(format!("observable `{s}` needs an argument")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("observable `{s}`: {e}")))
        };
        let kind = match head {
            "l2_norm" => ObservableKind::L2Norm,
            "l2_norm_sq" => ObservableKind::L2NormSq,
            "sup_grid" => ObservableKind::SupGrid,
            "mode" => {
                let k = num(arg)?;
                if !(k >= 1.0 && k.fract() == 0.0) {
                    return Err(Error::Parse(format!("mode index must be a positive integer in `{s}`")));
                }
                ObservableKind::Mode { k: k as usize }
            }
            "hbeta_sq" => ObservableKind::HbetaNormSq { beta: num(arg)? },
            "l2_ball" => ObservableKind::L2Ball { radius: num(arg)? },
            "const" => ObservableKind::Constant { value: num(arg)? },
            other => return Err(Error::Parse(format!("unknown observable `{other}`"))),
        };
        let obs = Observable::new(kind);
        match clip {
            None => Ok(obs),
            Some(c) => {
                let (lo, hi) = c
                    .split_once("..")
                    .ok_or_else(|| Error::Parse(format!("clip range in `{s}` must look like lo..hi")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("clip bound in `{s}`: {e}")))
                };
                obs.clipped(parse(lo)?, parse(hi)?)
            }
        }
    }
}

/// Histogram of one observable; values outside the edges land in the end bins.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub observable: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub burn_in: f64,
    /// Raw sums of the (unbinned) samples, for exact moments.
    pub sum: f64,
    pub sum_sq: f64,
}

impl EmpiricalMeasure {
    pub fn new(observable: impl Into<String>, edges: Vec<f64>, burn_in: f64) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("bin edges must be at least two strictly increasing values"));
        }
        Ok(Self {
            observable: observable.into(),
            counts: vec![0; edges.len() - 1],
            edges,
            total: 0,
            burn_in,
            sum: 0.0,
            sum_sq: 0.0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, v: f64) {
        if v.is_nan() {
            return;
        }
        let idx = self.edges[1..self.edges.len() - 1].partition_point(|&e| e <= v);
        self.counts[idx] += 1;
        self.total += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::domain("cannot merge histograms with different bin edges"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.total as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.total as f64;
        let m = self.mean();
        (self.sum_sq / n - m * m) * n / (n - 1.0)
    }
}

/// `bins` equal-width bins covering `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || bins == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
    }
    let w = (hi - lo) / bins as f64;
    Ok((0..=bins).map(|i| if i == bins { hi } else { lo + w * i as f64 }).collect())
}

/// Half the `L^1` distance between normalized histograms with shared bins.
pub fn tv_proxy(m1: &EmpiricalMeasure, m2: &EmpiricalMeasure) -> Result<f64> {
    if m1.edges != m2.edges {
        return Err(Error::domain("tv_proxy needs identical bin edges"));
    }
    if m1.total == 0 || m2.total == 0 {
        return Err(Error::domain("tv_proxy of an empty histogram"));
    }
    let d: f64 = m1
        .probabilities()
        .iter()
        .zip(m2.probabilities())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok((0.5 * d).clamp(0.0, 1.0))
}

/// Sample autocorrelation at integer lag.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    if lag >= series.len() {
        return Err(Error::usage(format!(
            "lag of {lag} samples needs more than the {} available",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    if var == 0.0 {
        return Ok(if lag == 0 { 1.0 } else { 0.0 });
    }
    let cov: f64 = series
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    Ok(cov / var)
}

/// Wilson score interval at 95%.
pub fn wilson_interval(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = hits as f64 / nf;
    let denom = 1.0 + Z * Z / nf;
    let center = (p + Z * Z / (2.0 * nf)) / denom;
    let half = Z / denom * (p * (1.0 - p) / nf + Z * Z / (4.0 * nf * nf)).sqrt();
    (
        (center - half).clamp(0.0, 1.0).min(p),
        (center + half).clamp(0.0, 1.0).max(p),
    )
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Time window and sampling of an empirical invariant measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InvariantSpec {
    /// `T`: samples are taken at `t + 1` for `t in [burn_in, T]`.
    pub horizon: f64,
    pub burn_in: f64,
    /// Sample every `stride` steps.
    pub stride: usize,
    pub paths: usize,
    /// Number of equal consecutive windows to report separately.
    pub windows: usize,
    /// Stream family of the paths; distinct families give independent runs.
    pub family: u64,
}

impl InvariantSpec {
    /// Burn-in of 20% of `T`, every step sampled, one path, two windows.
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            burn_in: 0.2 * horizon,
            stride: 1,
            paths: 1,
            windows: 2,
            family: family::PATHS,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.horizon > self.burn_in) || !(self.burn_in >= 0.0) {
            return Err(Error::domain(format!(
                "need T > burn_in >= 0, got T = {}, burn_in = {}",
                self.horizon, self.burn_in
            )));
        }
        if self.stride == 0 || self.paths == 0 || self.windows == 0 {
            return Err(Error::domain("stride, paths and windows must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantRun {
    pub measures: Vec<EmpiricalMeasure>,
    /// `windows[w][o]`: observable `o` restricted to window `w`.
    pub windows: Vec<Vec<EmpiricalMeasure>>,
}

/// Lags, horizons and branching sizes of a mixing run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingSpec {
    pub horizon: f64,
    pub burn_in: f64,
    pub stride: usize,
    pub lags: Vec<f64>,
    pub horizons: Vec<f64>,
    pub states: usize,
    pub replicas: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub observables: Vec<String>,
    pub lags: Vec<f64>,
    /// `autocorrelation[o][l]`.
    pub autocorrelation: Vec<Vec<f64>>,
    pub horizons: Vec<f64>,
    /// Debiased `mean_k (U_h phi(X_k) - phi_bar)^2` per observable and horizon.
    pub statistic: Vec<Vec<f64>>,
    pub stationary_mean: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FellerEstimate {
    pub modulus: f64,
    pub mc_error: f64,
    pub mean_x: f64,
    pub mean_y: f64,
    pub distance: f64,
}

/// Importance-sampling estimate of the unsteered hitting probability from steered paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReweightedEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub mean_weight: f64,
    pub weight_std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HittingEstimate {
    pub frequency: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
    pub hits: usize,
    pub n_samples: usize,
    pub steered: bool,
    pub reweighted: Option<ReweightedEstimate>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExitLevel {
    pub level: f64,
    pub frequency: f64,
    pub ci: (f64, f64),
}

/// Monte Carlo driver bound to one model, master seed and worker count.
#[derive(Clone, Debug)]
pub struct Lab {
    integrator: Integrator,
    seed: u64,
    workers: usize,
}

impl Lab {
    pub fn new(cfg: ModelConfig, seed: u64, workers: usize) -> Result<Self> {
        Ok(Self {
            integrator: Integrator::new(cfg)?,
            seed,
            workers: workers.max(1),
        })
    }

    pub fn integrator(&self) -> &Integrator {
        &self.integrator
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, fam: u64, i: usize) -> RngStream {
        RngStream::new(self.seed, fam + i as u64)
    }

    fn final_states(&self, x: &SpectralField, t: f64, n: usize, fam: u64) -> Result<Vec<SpectralField>> {
        par_map(n, self.workers, |i| {
            self.integrator
                .evolve(x, t, &mut self.stream(fam, i))
                .map_err(|e| e.on_path(fam + i as u64))
        })
    }

    fn expectation_in(&self, phi: &Observable, x: &SpectralField, t: f64, n: usize, fam: u64) -> Result<McEstimate> {
        if n < 100 {
            return Err(Error::usage(format!("transition expectation needs >= 100 samples, got {n}")));
        }
        if !(t >= 0.0) {
            return Err(Error::domain(format!("t must be >= 0, got {t}")));
        }
        let basis = self.integrator.basis();
        if let Some(c) = phi.constant() {
            return Ok(McEstimate {
                mean: c,
                std_error: 0.0,
                n_samples: n,
            });
        }
        if t == 0.0 {
            return Ok(McEstimate {
                mean: phi.eval(x, basis),
                std_error: 0.0,
                n_samples: n,
            });
        }
        let values: Vec<f64> = self
            .final_states(x, t, n, fam)?
            .iter()
            .map(|u| phi.eval(u, basis))
            .collect();
        let (mean, std_error) = mean_and_se(&values);
        Ok(McEstimate {
            mean,
            std_error,
            n_samples: n,
        })
    }

    /// `(U_t phi)(x) = E phi(u(t, x))` with its standard error.
    pub fn transition_expectation(&self, phi: &Observable, x: &SpectralField, t: f64, n: usize) -> Result<McEstimate> {
        self.expectation_in(phi, x, t, n, family::PATHS)
    }

    /// Bin edges from a pilot run of length `duration` (after `burn_in`),
    /// widened by a quarter of the observed range on each side.
    pub fn pilot_edges(
        &self,
        x: &SpectralField,
        observables: &[Observable],
        duration: f64,
        burn_in: f64,
        bins: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let basis = self.integrator.basis();
        let mut lo = vec![f64::INFINITY; observables.len()];
        let mut hi = vec![f64::NEG_INFINITY; observables.len()];
        let mut stream = self.stream(family::PILOT, 0);
        let dt = self.integrator.dt();
        let mut u = x.clone();
        let steps = self.integrator.steps_for(burn_in + duration);
        let first = self.integrator.steps_for(burn_in);
        for k in 0..steps {
            let inc = self.integrator.increment(&mut stream);
            u = self
                .integrator
                .step_auto_with(&u, k as f64 * dt, &inc)
                .map_err(|e| e.on_path(family::PILOT))?;
            if k + 1 >= first {
                for (o, phi) in observables.iter().enumerate() {
                    let v = phi.eval(&u, basis);
                    lo[o] = lo[o].min(v);
                    hi[o] = hi[o].max(v);
                }
            }
        }
        lo.iter()
            .zip(&hi)
            .map(|(&l, &h)| {
                let (l, h) = if l.is_finite() && h.is_finite() { (l, h) } else { (0.0, 1.0) };
                let pad = if h > l { 0.25 * (h - l) } else { 0.5 };
                uniform_edges(l - pad, h + pad, bins)
            })
            .collect()
    }

    /// Time-averaged histograms of `observables` over `u(t + 1)`, `t in [burn_in, T]`.
    pub fn empirical_invariant(
        &self,
        x: &SpectralField,
        spec: &InvariantSpec,
        observables: &[Observable],
        edges: &[Vec<f64>],
    ) -> Result<InvariantRun> {
        spec.check()?;
        if edges.len() != observables.len() {
            return Err(Error::ShapeMismatch {
                expected: observables.len(),
                got: edges.len(),
            });
        }
        let empty = |obs: &[Observable]| -> Result<Vec<EmpiricalMeasure>> {
            obs.iter()
                .zip(edges)
                .map(|(o, e)| EmpiricalMeasure::new(o.name(), e.clone(), spec.burn_in))
                .collect()
        };
        let dt = self.integrator.dt();
        let k0 = self.integrator.steps_for(1.0 + spec.burn_in);
        let k1 = self.integrator.steps_for(1.0 + spec.horizon);
        let span = (k1 - k0 + 1) as f64;
        let basis = self.integrator.basis();

        let per_path = par_map(spec.paths, self.workers, |i| {
            let mut windows = (0..spec.windows).map(|_| empty(observables)).collect::<Result<Vec<_>>>()?;
            let mut stream = self.stream(spec.family, i);
            let mut u = x.clone();
            for k in 0..=k1 {
                if k > 0 {
                    let inc = self.integrator.increment(&mut stream);
                    u = self
                        .integrator
                        .step_auto_with(&u, (k - 1) as f64 * dt, &inc)
                        .map_err(|e| e.on_path(spec.family + i as u64))?;
                }
                if k < k0 || !(k - k0).is_multiple_of(spec.stride) {
                    continue;
                }
                let w = (((k - k0) as f64 / span) * spec.windows as f64) as usize;
                for (m, phi) in windows[w.min(spec.windows - 1)].iter_mut().zip(observables) {
                    m.add(phi.eval(&u, basis));
                }
            }
            Ok(windows)
        })?;

        let mut windows = (0..spec.windows).map(|_| empty(observables)).collect::<Result<Vec<_>>>()?;
        for path in &per_path {
            for (acc, w) in windows.iter_mut().zip(path) {
                for (a, m) in acc.iter_mut().zip(w) {
                    a.merge(m)?;
                }
            }
        }
        let mut measures = empty(observables)?;
        for w in &windows {
            for (a, m) in measures.iter_mut().zip(w) {
                a.merge(m)?;
            }
        }
        Ok(InvariantRun { measures, windows })
    }

    /// Autocorrelations along one stationary path and a branching estimate of
    /// `int |U_h phi - int phi dmu|^2 dmu` with the empirical `mu`.
    pub fn mixing_report(&self, x: &SpectralField, observables: &[Observable], spec: &MixingSpec) -> Result<MixingReport> {
        if !(spec.horizon > spec.burn_in) || spec.stride == 0 {
            return Err(Error::domain("mixing needs T > burn_in and a positive stride"));
        }
        if spec.horizons.iter().any(|h| !(*h > 0.0)) || spec.horizons.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("mixing horizons must be positive and increasing"));
        }
        if spec.states == 0 || spec.replicas < 2 {
            return Err(Error::domain("mixing needs >= 1 branch state and >= 2 replicas"));
        }
        let it = &self.integrator;
        let dt = it.dt();
        let basis = it.basis();
        let k0 = it.steps_for(spec.burn_in);
        let k1 = it.steps_for(spec.horizon);
        let gap = ((k1 - k0) / spec.states).max(1);

        let mut series = vec![Vec::new(); observables.len()];
        let mut states = Vec::with_capacity(spec.states);
        let mut stream = self.stream(family::PATHS, 0);
        let mut u = x.clone();
        for k in 0..=k1 {
            if k > 0 {
                let inc = it.increment(&mut stream);
                u = it.step_auto_with(&u, (k - 1) as f64 * dt, &inc).map_err(|e| e.on_path(family::PATHS))?;
            }
            if k < k0 {
                continue;
            }
            if (k - k0).is_multiple_of(spec.stride) {
                for (s, phi) in series.iter_mut().zip(observables) {
                    s.push(phi.eval(&u, basis));
                }
            }
            if (k - k0).is_multiple_of(gap) && states.len() < spec.states {
                states.push(u.clone());
            }
        }

        let sample_dt = dt * spec.stride as f64;
        let autocorrelation = series
            .iter()
            .map(|s| {
                spec.lags
                    .iter()
                    .map(|&l| autocorrelation(s, (l / sample_dt).round() as usize))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let stationary_mean: Vec<f64> = series.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();

        let horizon_steps: Vec<usize> = spec.horizons.iter().map(|&h| it.steps_for(h).max(1)).collect();
        let r = spec.replicas;
        // branch[k * R + r][h][o]
        let branches = par_map(states.len() * r, self.workers, |id| {
            let fam = family::BRANCHES;
            let mut stream = self.stream(fam, id);
            let mut u = states[id / r].clone();
            let mut out = Vec::with_capacity(horizon_steps.len());
            let mut next = 0;
            for k in 1..=*horizon_steps.last().unwrap_or(&0) {
                let inc = it.increment(&mut stream);
                u = it.step_auto_with(&u, (k - 1) as f64 * dt, &inc).map_err(|e| e.on_path(fam + id as u64))?;
                while next < horizon_steps.len() && horizon_steps[next] == k {
                    out.push(observables.iter().map(|phi| phi.eval(&u, basis)).collect::<Vec<_>>());
                    next += 1;
                }
            }
            Ok(out)
        })?;

        let statistic = (0..observables.len())
            .map(|o| {
                (0..horizon_steps.len())
                    .map(|h| {
                        let mut acc = 0.0;
                        for k in 0..states.len() {
                            let vals: Vec<f64> = (0..r).map(|i| branches[k * r + i][h][o]).collect();
                            let (m, se) = mean_and_se(&vals);
                            acc += (m - stationary_mean[o]).powi(2) - se * se;
                        }
                        acc / states.len() as f64
                    })
                    .collect()
            })
            .collect();

        Ok(MixingReport {
            observables: observables.iter().map(Observable::name).collect(),
            lags: spec.lags.clone(),
            autocorrelation,
            horizons: spec.horizons.clone(),
            statistic,
            stationary_mean,
        })
    }

    /// `|U_t phi(x) - U_t phi(y)| / |x - y|` from independent ensembles.
    pub fn feller_modulus(
        &self,
        phi: &Observable,
        x: &SpectralField,
        y: &SpectralField,
        t: f64,
        n: usize,
    ) -> Result<FellerEstimate> {
        if let Some(r) = self.integrator.config().truncation {
            if x.l2_norm() > r || y.l2_norm() > r {
                return Err(Error::domain(format!("feller modulus needs |x|, |y| <= R = {r}")));
            }
        }
        let distance = x.try_sub(y)?.l2_norm();
        if distance == 0.0 {
            let m = self.expectation_in(phi, x, 0.0, n.max(100), family::PATHS)?.mean;
            return Ok(FellerEstimate {
                modulus: 0.0,
                mc_error: 0.0,
                mean_x: m,
                mean_y: m,
                distance,
            });
        }
        let ex = self.expectation_in(phi, x, t, n, family::PATHS)?;
        let ey = self.expectation_in(phi, y, t, n, family::SECOND_ENSEMBLE)?;
        Ok(FellerEstimate {
            modulus: (ex.mean - ey.mean).abs() / distance,
            mc_error: ex.std_error.hypot(ey.std_error) / distance,
            mean_x: ex.mean,
            mean_y: ey.mean,
            distance,
        })
    }

    /// Frequency of `|u(t, x) - y| < eps`. With `steered`, paths follow the
    /// controlled system of the default plan and, when `inf |g| > 0`, the
    /// Girsanov-reweighted estimate of the unsteered probability is included.
    pub fn hitting_probability(
        &self,
        x: &SpectralField,
        y: &SpectralField,
        eps: f64,
        t: f64,
        n: usize,
        steered: bool,
    ) -> Result<HittingEstimate> {
        if !(eps > 0.0) {
            return Err(Error::domain(format!("eps must be > 0, got {eps}")));
        }
        if n == 0 {
            return Err(Error::usage("hitting probability needs at least one sample"));
        }
        let it = &self.integrator;
        if y.len() != it.modes() {
            return Err(Error::ShapeMismatch {
                expected: it.modes(),
                got: y.len(),
            });
        }
        let (hits, weights): (Vec<bool>, Vec<Option<f64>>) = if steered {
            let plan = SteeringPlan::default_for(x, y.clone(), t)?.on_grid(it.dt())?;
            let weighted = it.config().diffusion.abs_range().0 > 0.0;
            par_map(n, self.workers, |i| {
                let (u, w) = self.steered_path(x, &plan, i, weighted).map_err(|e| e.on_path(i as u64))?;
                Ok((u.try_sub(y)?.l2_norm() < eps, w))
            })?
            .into_iter()
            .unzip()
        } else {
            self.final_states(x, t, n, family::PATHS)?
                .iter()
                .map(|u| Ok((u.try_sub(y)?.l2_norm() < eps, None)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip()
        };
        let count = hits.iter().filter(|h| **h).count();
        let p = count as f64 / n as f64;
        let reweighted = if weights.iter().all(Option::is_some) && steered {
            let w: Vec<f64> = weights.iter().map(|w| w.unwrap_or(0.0)).collect();
            let hw: Vec<f64> = w.iter().zip(&hits).map(|(w, h)| if *h { *w } else { 0.0 }).collect();
            let (estimate, std_error) = mean_and_se(&hw);
            let (mean_weight, weight_std_error) = mean_and_se(&w);
            Some(ReweightedEstimate {
                estimate,
                std_error,
                mean_weight,
                weight_std_error,
            })
        } else {
            None
        };
        Ok(HittingEstimate {
            frequency: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            ci: wilson_interval(count, n),
            hits: count,
            n_samples: n,
            steered,
            reweighted,
        })
    }

    /// One controlled path; the weight is `exp(-int <beta, dW> - 1/2 int |beta|^2)`,
    /// the density of the unsteered law with respect to the steered one.
    fn steered_path(
        &self,
        x: &SpectralField,
        plan: &SteeringPlan,
        i: usize,
        weighted: bool,
    ) -> Result<(SpectralField, Option<f64>)> {
        let it = &self.integrator;
        let dt = it.dt();
        let mut stream = self.stream(family::PATHS, i);
        let tau_step = plan.tau_step(dt);
        let mut u = x.clone();
        let mut u_tau = x.clone();
        let mut weight = GirsanovWeight::default();
        for k in 0..it.steps_for(plan.t_end) {
            if k == tau_step {
                u_tau = u.clone();
            }
            let s = k as f64 * dt;
            let inc = it.increment(&mut stream);
            if weighted && k >= tau_step {
                // drift is F_tau-measurable, so its time argument may sit mid-step
                let drift = it.steering_drift((s + 0.5 * dt).min(plan.t_end), plan, &u_tau)?;
                let beta = it.girsanov_integrand(&drift, &u)?.scaled(-1.0);
                weight.accumulate(&beta, &inc);
            }
            u = it.step_controlled_with(&u, s, plan, &u_tau, &inc)?;
        }
        Ok((u, weighted.then(|| weight.log_weight().exp())))
    }

    /// `P(tau_n < t)` for increasing levels `n`, counting `t = 0`.
    pub fn exit_time_tail(&self, x: &SpectralField, levels: &[f64], t: f64, n: usize) -> Result<Vec<ExitLevel>> {
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::domain("exit levels must be strictly increasing"));
        }
        if n == 0 {
            return Err(Error::usage("exit-time tail needs at least one sample"));
        }
        let it = &self.integrator;
        let dt = it.dt();
        let maxima = par_map(n, self.workers, |i| {
            let mut stream = self.stream(family::PATHS, i);
            let mut u = x.clone();
            let mut max = u.l2_norm();
            for k in 0..it.steps_for(t) {
                let inc = it.increment(&mut stream);
                match it.step_auto_with(&u, k as f64 * dt, &inc) {
                    Ok(next) => u = next,
                    // past the norm ceiling every level has been crossed
                    Err(Error::BlowUp { .. }) => return Ok(f64::INFINITY),
                    Err(e) => return Err(e.on_path(i as u64)),
                }
                max = max.max(u.l2_norm());
            }
            Ok(max)
        })?;
        Ok(levels
            .iter()
            .map(|&level| {
                let hits = maxima.iter().filter(|&&m| m >= level).count();
                ExitLevel {
                    level,
                    frequency: hits as f64 / n as f64,
                    ci: wilson_interval(hits, n),
                }
            })
            .collect())
    }
}
