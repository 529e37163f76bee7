//! Exponential-Euler integration of the fractional stochastic Burgers equation
//!
//! ```text
//! du = (-A_alpha u + d/dx u^2) dt + g(u) dW,   A_alpha e_j = (pi j)^alpha e_j,
//! ```
//!
//! together with its truncated variant, the damped stochastic convolution
//! `z_gamma`, the remainder `v_gamma = u - z_gamma`, and the steered system
//! used for irreducibility experiments.
//!
//! One step of length `dt` from `u` with rates `mu_j = (pi j)^alpha`:
//!
//! ```text
//! u'_j = e^{-mu_j dt} u_j + phi1_j N_j(u) + filter_j [g(u) dW]_j,
//! phi1_j = (1 - e^{-mu_j dt}) / mu_j
//! ```
//!
//! The linear flow is exact per mode, so stiff high modes impose no step
//! restriction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{multiplicative_increment, wiener_increment, Diffusion, NoiseIncrement, RngStream};
use crate::spectral::{
    dissipation_rates, sobolev_norm, truncate_pi_n, SobolevIndex, SpectralBasis, SpectralField,
};

/// Per-mode weighting of the noise increment inside one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFilter {
    /// `e^{-mu dt / 2}`: the kernel evaluated at the step midpoint.
    #[default]
    Midpoint,
    /// `sqrt((1 - e^{-2 mu dt}) / (2 mu dt))`: exact one-step variance for frozen `g`.
    ExactVariance,
}

impl NoiseFilter {
    fn weight(self, rate: f64, dt: f64) -> f64 {
        match self {
            NoiseFilter::Midpoint => (-0.5 * rate * dt).exp(),
            NoiseFilter::ExactVariance => {
                let x = rate * dt;
                if x < 1e-12 {
                    1.0
                } else {
                    (-(-2.0 * x).exp_m1() / (2.0 * x)).sqrt()
                }
            }
        }
    }
}

/// Model and discretisation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub modes: usize,
    pub grid: usize,
    pub dt: f64,
    pub diffusion: Diffusion,
    /// Radius of the `L^2` ball used by the truncated system.
    pub truncation: Option<f64>,
    /// `false` drops the convective term (linear Ornstein-Uhlenbeck dynamics).
    pub nonlinear: bool,
    pub noise_filter: NoiseFilter,
    /// Paths whose `L^2` norm exceeds this are aborted.
    pub norm_ceiling: f64,
    /// Smoothness of the `H^{beta,2}` trajectory observable.
    pub beta_obs: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: 1.8,
            gamma: 0.0,
            modes: 16,
            grid: 32,
            dt: 1e-3,
            diffusion: Diffusion::default(),
            truncation: None,
            nonlinear: true,
            noise_filter: NoiseFilter::Midpoint,
            norm_ceiling: 1e6,
            beta_obs: 0.1,
        }
    }
}

impl ModelConfig {
    /// Structural checks needed to build an integrator. Hypothesis checks on
    /// `alpha` and `g` live in [`crate::harness::config`].
    pub fn check_structure(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::domain("modes must be >= 1"));
        }
        if self.grid < 2 * self.modes {
            return Err(Error::domain(format!(
                "grid ({}) must be >= 2 * modes ({}) for dealiasing",
                self.grid,
                2 * self.modes
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::domain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if let Some(n) = self.truncation {
            if !(n > 0.0) {
                return Err(Error::domain(format!("truncation radius must be > 0, got {n}")));
            }
        }
        if !self.diffusion.is_finite() {
            return Err(Error::domain("diffusion parameters must be finite"));
        }
        Ok(())
    }

    /// Linear OU variant: no convective term, `g = 1`.
    pub fn linear(alpha: f64) -> Self {
        Self {
            alpha,
            nonlinear: false,
            diffusion: Diffusion::Constant { value: 1.0 },
            ..Self::default()
        }
    }
}

/// Scalar observables recorded along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathObservables {
    pub l2: f64,
    pub h_beta: f64,
    pub mode1: f64,
    pub mode2: f64,
}

impl PathObservables {
    pub fn of(u: &SpectralField, beta: f64) -> Self {
        Self {
            l2: u.l2_norm(),
            h_beta: sobolev_norm(u, SobolevIndex::hilbert(beta), None).unwrap_or(f64::NAN),
            mode1: u.coeff(1),
            mode2: u.coeff(2),
        }
    }
}

/// Time series of snapshots and observables; times strictly increase.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub snapshots: Vec<SpectralField>,
    pub observables: Vec<PathObservables>,
}

impl TrajectoryRecord {
    pub fn push(&mut self, t: f64, u: &SpectralField, beta: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.observables.push(PathObservables::of(u, beta));
        self.snapshots.push(u.clone());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&SpectralField> {
        self.snapshots.last()
    }
}

/// Target, switch-on time, terminal time and ball radius of a steering run.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringPlan {
    pub target: SpectralField,
    pub tau: f64,
    pub t_end: f64,
    pub radius: f64,
}

impl SteeringPlan {
    pub fn new(target: SpectralField, tau: f64, t_end: f64, radius: f64) -> Result<Self> {
        if !(0.0 < tau && tau < t_end) {
            return Err(Error::domain(format!(
                "steering needs 0 < tau < t, got tau = {tau}, t = {t_end}"
            )));
        }
        if !target.is_finite() {
            return Err(Error::domain("steering target must be finite"));
        }
        if !(radius > 0.0) {
            return Err(Error::domain("steering radius must be > 0"));
        }
        Ok(Self {
            target,
            tau,
            t_end,
            radius,
        })
    }

    /// `tau = t - min(0.1, t/4)`, `radius = 2 |x|_{L^2} + 10`.
    pub fn default_for(x: &SpectralField, target: SpectralField, t_end: f64) -> Result<Self> {
        let tau = t_end - (0.1_f64).min(t_end / 4.0);
        Self::new(target, tau, t_end, 2.0 * x.l2_norm() + 10.0)
    }

    /// Same plan with `tau` moved onto the time grid of step `dt`.
    pub fn on_grid(&self, dt: f64) -> Result<Self> {
        let k = (self.tau / dt).round().max(1.0);
        Self::new(self.target.clone(), k * dt, self.t_end, self.radius)
    }

    pub fn tau_step(&self, dt: f64) -> usize {
        (self.tau / dt).round() as usize
    }
}

/// Precomputed per-mode factors for one [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Integrator {
    cfg: ModelConfig,
    basis: SpectralBasis,
    rates: Vec<f64>,
    decay: Vec<f64>,
    phi1: Vec<f64>,
    filter: Vec<f64>,
    decay_gamma: Vec<f64>,
    filter_gamma: Vec<f64>,
}

impl Integrator {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.check_structure()?;
        let basis = SpectralBasis::new(cfg.modes, cfg.grid)?;
        let rates = dissipation_rates(cfg.modes, cfg.alpha);
        let dt = cfg.dt;
        let decay = rates.iter().map(|m| (-m * dt).exp()).collect();
        let phi1 = rates.iter().map(|m| -(-m * dt).exp_m1() / m).collect();
        let filter = rates.iter().map(|&m| cfg.noise_filter.weight(m, dt)).collect();
        let decay_gamma = rates.iter().map(|m| (-(m + cfg.gamma) * dt).exp()).collect();
        let filter_gamma = rates
            .iter()
            .map(|&m| NoiseFilter::ExactVariance.weight(m + cfg.gamma, dt))
            .collect();
        Ok(Self {
            cfg,
            basis,
            rates,
            decay,
            phi1,
            filter,
            decay_gamma,
            filter_gamma,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    pub fn modes(&self) -> usize {
        self.cfg.modes
    }

    /// `(pi j)^alpha` for each mode.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn increment(&self, stream: &mut RngStream) -> NoiseIncrement {
        wiener_increment(stream, self.cfg.dt, self.cfg.modes).expect("dt validated at construction")
    }

    fn check_len(&self, f: &SpectralField) -> Result<()> {
        if f.len() != self.cfg.modes {
            return Err(Error::ShapeMismatch {
                expected: self.cfg.modes,
                got: f.len(),
            });
        }
        Ok(())
    }

    fn guard(&self, u: SpectralField, time: f64) -> Result<SpectralField> {
        let norm = u.l2_norm();
        if !norm.is_finite() || norm > self.cfg.norm_ceiling {
            return Err(Error::BlowUp {
                time,
                norm,
                path: None,
            });
        }
        Ok(u)
    }

    fn nonlinear_term(&self, u: &SpectralField) -> Option<SpectralField> {
        self.cfg.nonlinear.then(|| self.basis.convective_term(u))
    }

    /// Exponential-Euler step with an explicit convective input and noise.
    fn advance(
        &self,
        u: &SpectralField,
        convective: Option<&SpectralField>,
        inc: &NoiseIncrement,
    ) -> SpectralField {
        let noise = multiplicative_increment(&self.basis, u, inc, &self.cfg.diffusion);
        let mut out = Vec::with_capacity(u.len());
        for j in 0..u.len() {
            let mut v = self.decay[j] * u.coeffs()[j] + self.filter[j] * noise.coeffs()[j];
            if let Some(b) = convective {
                v += self.phi1[j] * b.coeffs()[j];
            }
            out.push(v);
        }
        SpectralField::from_vec(out)
    }

    /// Mild-solution step driven by a given increment; `time` is the step start.
    pub fn step_mild_with(&self, u: &SpectralField, time: f64, inc: &NoiseIncrement) -> Result<SpectralField> {
        self.check_len(u)?;
        let b = self.nonlinear_term(u);
        self.guard(self.advance(u, b.as_ref(), inc), time + inc.dt)
    }

    pub fn step_mild(&self, u: &SpectralField, time: f64, stream: &mut RngStream) -> Result<SpectralField> {
        let inc = self.increment(stream);
        self.step_mild_with(u, time, &inc)
    }

    /// Step of the truncated system: the convective input is `pi_n(u)`.
    pub fn step_truncated_with(&self, u: &SpectralField, time: f64, inc: &NoiseIncrement) -> Result<SpectralField> {
        self.check_len(u)?;
        let n = self
            .cfg
            .truncation
            .ok_or_else(|| Error::usage("truncated step needs `truncation` in the model config"))?;
        let b = if self.cfg.nonlinear {
            Some(self.basis.convective_term(&truncate_pi_n(u, n)?))
        } else {
            None
        };
        self.guard(self.advance(u, b.as_ref(), inc), time + inc.dt)
    }

    pub fn step_truncated(&self, u: &SpectralField, time: f64, stream: &mut RngStream) -> Result<SpectralField> {
        let inc = self.increment(stream);
        self.step_truncated_with(u, time, &inc)
    }

    /// Truncated step when a radius is configured, mild step otherwise.
    pub fn step_auto_with(&self, u: &SpectralField, time: f64, inc: &NoiseIncrement) -> Result<SpectralField> {
        if self.cfg.truncation.is_some() {
            self.step_truncated_with(u, time, inc)
        } else {
            self.step_mild_with(u, time, inc)
        }
    }

    /// Damped stochastic convolution update, exact in law for `g(u)` frozen over the step.
    pub fn z_gamma_step(&self, z: &SpectralField, u: &SpectralField, inc: &NoiseIncrement) -> Result<SpectralField> {
        self.check_len(z)?;
        self.check_len(u)?;
        let noise = multiplicative_increment(&self.basis, u, inc, &self.cfg.diffusion);
        Ok(SpectralField::from_vec(
            (0..z.len())
                .map(|j| self.decay_gamma[j] * z.coeffs()[j] + self.filter_gamma[j] * noise.coeffs()[j])
                .collect(),
        ))
    }

    /// `dv = (-A_alpha v + B(v + z)^2 + gamma z) dt`, explicit in `v` and `z`.
    pub fn v_gamma_step(&self, v: &SpectralField, z: &SpectralField, time: f64) -> Result<SpectralField> {
        self.check_len(v)?;
        let u = v.try_add(z)?;
        let b = self.nonlinear_term(&u);
        let gamma = self.cfg.gamma;
        let out = (0..v.len())
            .map(|j| {
                let forcing = b.as_ref().map_or(0.0, |b| b.coeffs()[j]) + gamma * z.coeffs()[j];
                self.decay[j] * v.coeffs()[j] + self.phi1[j] * forcing
            })
            .collect();
        self.guard(SpectralField::from_vec(out), time + self.cfg.dt)
    }

    /// Steering drift at time `s`.
    ///
    /// `f(s) = [ e^{-(s - tau) A_alpha}(y - u_tau) / (t - tau) + A_alpha y ] 1{|u_tau| <= n}`
    /// for `s > tau` and zero otherwise, so that
    /// `e^{-(t-tau)A} u_tau + int_tau^t e^{-(t-s)A} f(s) ds = y`.
    pub fn steering_drift(&self, s: f64, plan: &SteeringPlan, u_tau: &SpectralField) -> Result<SpectralField> {
        self.check_len(u_tau)?;
        self.check_len(&plan.target)?;
        if s > plan.t_end * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "steering drift requested at s = {s} beyond t = {}",
                plan.t_end
            )));
        }
        if s <= plan.tau || u_tau.l2_norm() > plan.radius {
            return Ok(SpectralField::zeros(u_tau.len()));
        }
        let span = plan.t_end - plan.tau;
        Ok(SpectralField::from_vec(
            (0..u_tau.len())
                .map(|j| {
                    let mu = self.rates[j];
                    let y = plan.target.coeffs()[j];
                    (-mu * (s - plan.tau)).exp() * (y - u_tau.coeffs()[j]) / span + mu * y
                })
                .collect(),
        ))
    }

    /// `int_s^{s+dt} e^{-(s+dt-r) A_alpha} f(r) dr`, evaluated in closed form per mode.
    pub fn steering_integral(&self, s: f64, plan: &SteeringPlan, u_tau: &SpectralField) -> Result<Option<SpectralField>> {
        let end = s + self.cfg.dt;
        if end <= plan.tau || u_tau.l2_norm() > plan.radius {
            return Ok(None);
        }
        if s > plan.t_end * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "steering step starts at s = {s} beyond t = {}",
                plan.t_end
            )));
        }
        let start = s.max(plan.tau);
        let span = plan.t_end - plan.tau;
        Ok(Some(SpectralField::from_vec(
            (0..u_tau.len())
                .map(|j| {
                    let mu = self.rates[j];
                    let y = plan.target.coeffs()[j];
                    let c1 = (y - u_tau.coeffs()[j]) / span;
                    c1 * (-mu * (end - plan.tau)).exp() * (end - start) - (-mu * (end - start)).exp_m1() * y
                })
                .collect(),
        )))
    }

    /// Mild step plus the exactly integrated steering drift over `[s, s + dt]`.
    pub fn step_controlled_with(
        &self,
        u: &SpectralField,
        s: f64,
        plan: &SteeringPlan,
        u_tau: &SpectralField,
        inc: &NoiseIncrement,
    ) -> Result<SpectralField> {
        let base = self.step_mild_with(u, s, inc)?;
        match self.steering_integral(s, plan, u_tau)? {
            None => Ok(base),
            Some(push) => self.guard(base.try_add(&push)?, s + inc.dt),
        }
    }

    pub fn step_controlled(
        &self,
        u: &SpectralField,
        s: f64,
        plan: &SteeringPlan,
        u_tau: &SpectralField,
        stream: &mut RngStream,
    ) -> Result<SpectralField> {
        let inc = self.increment(stream);
        self.step_controlled_with(u, s, plan, u_tau, &inc)
    }

    /// Girsanov integrand `beta = f / g(u)`, divided pointwise on the grid.
    pub fn girsanov_integrand(&self, drift: &SpectralField, u: &SpectralField) -> Result<SpectralField> {
        let g = &self.cfg.diffusion;
        if g.abs_range().0 <= 0.0 {
            return Err(Error::Hypothesis {
                hypothesis: "inf |g| > 0",
                detail: "Girsanov integrand needs a diffusion bounded away from zero".into(),
            });
        }
        if let Some(c) = g.constant_value() {
            return Ok(drift.scaled(1.0 / c));
        }
        let ug = self.basis.synthesize(u.coeffs());
        let mut fg = self.basis.synthesize(drift.coeffs());
        for (f, x) in fg.iter_mut().zip(&ug) {
            *f /= g.eval(*x);
        }
        Ok(SpectralField::from_vec(self.basis.analyze(&fg)))
    }

    /// Number of whole steps covering `[0, t]`.
    pub fn steps_for(&self, t: f64) -> usize {
        (t / self.cfg.dt).round() as usize
    }

    /// Runs `step_mild` (or the truncated step when configured) from `x` to
    /// `t_end`, recording every `record_every` steps.
    pub fn simulate(
        &self,
        x: &SpectralField,
        t_end: f64,
        stream: &mut RngStream,
        record_every: usize,
    ) -> Result<TrajectoryRecord> {
        self.check_len(x)?;
        let steps = self.steps_for(t_end);
        let every = record_every.max(1);
        let mut rec = TrajectoryRecord::default();
        let mut u = x.clone();
        rec.push(0.0, &u, self.cfg.beta_obs);
        for k in 0..steps {
            let t = k as f64 * self.cfg.dt;
            let inc = self.increment(stream);
            u = self.step_auto_with(&u, t, &inc)?;
            if (k + 1) % every == 0 || k + 1 == steps {
                rec.push((k + 1) as f64 * self.cfg.dt, &u, self.cfg.beta_obs);
            }
        }
        Ok(rec)
    }

    /// Final state after `t_end` with no recording.
    pub fn evolve(&self, x: &SpectralField, t_end: f64, stream: &mut RngStream) -> Result<SpectralField> {
        self.check_len(x)?;
        let mut u = x.clone();
        for k in 0..self.steps_for(t_end) {
            let inc = self.increment(stream);
            u = self.step_auto_with(&u, k as f64 * self.cfg.dt, &inc)?;
        }
        Ok(u)
    }
}

/// Aligned `u = v_gamma + z_gamma` samples from [`Integrator::simulate_decomposition`].
#[derive(Clone, Debug, Default)]
pub struct DecompositionRecord {
    pub times: Vec<f64>,
    pub u: Vec<SpectralField>,
    pub v: Vec<SpectralField>,
    pub z: Vec<SpectralField>,
}

impl Integrator {
    /// Runs the `(z_gamma, v_gamma)` pair from `z(0) = 0`, `v(0) = x`, recording
    /// every `record_every` steps.
    pub fn simulate_decomposition(
        &self,
        x: &SpectralField,
        t_end: f64,
        stream: &mut RngStream,
        record_every: usize,
    ) -> Result<DecompositionRecord> {
        self.check_len(x)?;
        let every = record_every.max(1);
        let steps = self.steps_for(t_end);
        let mut z = SpectralField::zeros(x.len());
        let mut v = x.clone();
        let mut rec = DecompositionRecord::default();
        let push = |rec: &mut DecompositionRecord, t: f64, v: &SpectralField, z: &SpectralField| -> Result<()> {
            rec.times.push(t);
            rec.u.push(v.try_add(z)?);
            rec.v.push(v.clone());
            rec.z.push(z.clone());
            Ok(())
        };
        push(&mut rec, 0.0, &v, &z)?;
        for k in 0..steps {
            let t = k as f64 * self.cfg.dt;
            let inc = self.increment(stream);
            let u = v.try_add(&z)?;
            let z_next = self.z_gamma_step(&z, &u, &inc)?;
            v = self.v_gamma_step(&v, &z, t)?;
            z = z_next;
            if (k + 1) % every == 0 || k + 1 == steps {
                push(&mut rec, (k + 1) as f64 * self.cfg.dt, &v, &z)?;
            }
        }
        Ok(rec)
    }
}

/// Accumulates `log Z_T = int <beta, dW> - 1/2 int |beta|^2 dt` with left-point sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GirsanovWeight {
    pub stochastic: f64,
    pub quadratic: f64,
}

impl GirsanovWeight {
    pub fn accumulate(&mut self, beta: &SpectralField, inc: &NoiseIncrement) {
        self.stochastic += beta
            .coeffs()
            .iter()
            .zip(&inc.mode_increments)
            .map(|(b, w)| b * w)
            .sum::<f64>();
        self.quadratic += beta.l2_norm_sq() * inc.dt;
    }

    pub fn log_weight(&self) -> f64 {
        self.stochastic - 0.5 * self.quadratic
    }
}

/// `log Z_T` for a recorded integrand path and the increments that drove it.
pub fn girsanov_log_weight(betas: &[SpectralField], increments: &[NoiseIncrement]) -> Result<f64> {
    if betas.len() != increments.len() {
        return Err(Error::ShapeMismatch {
            expected: betas.len(),
            got: increments.len(),
        });
    }
    let mut w = GirsanovWeight::default();
    for (b, inc) in betas.iter().zip(increments) {
        w.accumulate(b, inc);
    }
    Ok(w.log_weight())
}
