//! Reproducible cylindrical-Wiener increments and multiplicative noise.
//!
//! Every trajectory owns an [`RngStream`] addressed by `(master_seed,
//! stream_id, counter)`. The stream is a ChaCha8 keystream keyed by the
//! master seed with the stream id selecting an independent nonce, so any
//! worker can regenerate any path without shared state.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{SpectralBasis, SpectralField};

/// Deterministic random source addressed by `(master_seed, stream_id, counter)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::at(master_seed, stream_id, 0)
    }

    /// Stream positioned at keystream word `counter`.
    pub fn at(master_seed: u64, stream_id: u64, counter: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        rng.set_word_pos(counter);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Current keystream word position.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Stream-id families so distinct roles inside one experiment never collide.
pub mod family {
    const SHIFT: u32 = 40;
    pub const PATHS: u64 = 0;
    pub const SECOND_ENSEMBLE: u64 = 1 << SHIFT;
    pub const PILOT: u64 = 2 << SHIFT;
    pub const BRANCHES: u64 = 3 << SHIFT;
    pub const AUX: u64 = 4 << SHIFT;
}

/// Brownian increments `Delta beta_j`, `j = 1..=N`, over one step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub mode_increments: Vec<f64>,
    pub dt: f64,
}

impl NoiseIncrement {
    pub fn zeros(n: usize, dt: f64) -> Self {
        Self {
            mode_increments: vec![0.0; n],
            dt,
        }
    }

    /// Increment over the union of consecutive steps.
    pub fn sum(parts: &[NoiseIncrement]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::usage("cannot sum an empty list of increments"))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.mode_increments.len() != out.mode_increments.len() {
                return Err(Error::ShapeMismatch {
                    expected: out.mode_increments.len(),
                    got: p.mode_increments.len(),
                });
            }
            out.dt += p.dt;
            for (a, b) in out.mode_increments.iter_mut().zip(&p.mode_increments) {
                *a += b;
            }
        }
        Ok(out)
    }

    pub fn as_field(&self) -> SpectralField {
        SpectralField::from_vec(self.mode_increments.clone())
    }
}

/// `N` i.i.d. `N(0, dt)` draws.
pub fn wiener_increment(stream: &mut RngStream, dt: f64, n: usize) -> Result<NoiseIncrement> {
    if !(dt > 0.0) {
        return Err(Error::domain(format!("time step must be > 0, got {dt}")));
    }
    let sd = dt.sqrt();
    Ok(NoiseIncrement {
        mode_increments: (0..n).map(|_| sd * stream.standard_normal()).collect(),
        dt,
    })
}

/// Diffusion coefficient `g` acting pointwise on the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion {
    /// `g(x) = value`.
    Constant { value: f64 },
    /// `g(x) = offset + amplitude * tanh(scale * x)`.
    Tanh {
        offset: f64,
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for Diffusion {
    /// `1 + 0.5 tanh(x)`: values in `[0.5, 1.5]`, Lipschitz constant 0.5.
    fn default() -> Self {
        Diffusion::Tanh {
            offset: 1.0,
            amplitude: 0.5,
            scale: 1.0,
        }
    }
}

impl Diffusion {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Diffusion::Constant { value } => value,
            Diffusion::Tanh {
                offset,
                amplitude,
                scale,
            } => offset + amplitude * (scale * x).tanh(),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            Diffusion::Constant { value } => Some(value),
            Diffusion::Tanh { amplitude, .. } if amplitude == 0.0 => Some(self.eval(0.0)),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            Diffusion::Constant { value } => value.is_finite(),
            Diffusion::Tanh {
                offset,
                amplitude,
                scale,
            } => offset.is_finite() && amplitude.is_finite() && scale.is_finite(),
        }
    }

    /// `inf |g|` and `sup |g|` over the real line.
    pub fn abs_range(&self) -> (f64, f64) {
        match *self {
            Diffusion::Constant { value } => (value.abs(), value.abs()),
            Diffusion::Tanh {
                offset, amplitude, ..
            } => {
                let (lo, hi) = (offset - amplitude.abs(), offset + amplitude.abs());
                let inf = if lo <= 0.0 && hi >= 0.0 {
                    0.0
                } else {
                    lo.abs().min(hi.abs())
                };
                (inf, lo.abs().max(hi.abs()))
            }
        }
    }
}

/// Sine coefficients of `g(u) dW` with both factors realised on the grid.
pub fn multiplicative_increment(
    basis: &SpectralBasis,
    u: &SpectralField,
    inc: &NoiseIncrement,
    g: &Diffusion,
) -> SpectralField {
    if let Some(c) = g.constant_value() {
        return SpectralField::from_vec(inc.mode_increments.iter().map(|b| c * b).collect());
    }
    let ug = basis.synthesize(u.coeffs());
    let mut wg = basis.synthesize(&inc.mode_increments);
    for (w, x) in wg.iter_mut().zip(&ug) {
        *w *= g.eval(*x);
    }
    SpectralField::from_vec(basis.analyze(&wg))
}

/// Monte Carlo check of `E[W(t,x) W(s,y)] = (t ^ s)(x ^ y)`.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceEstimate {
    pub empirical: f64,
    pub exact: f64,
    /// Exact covariance of the `N`-mode partial sum.
    pub truncated_exact: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// `int_0^x e_j = sqrt2 (1 - cos(pi j x)) / (pi j)`.
fn indicator_coeff(j: usize, x: f64) -> f64 {
    let k = PI * j as f64;
    SQRT_2 * (1.0 - (k * x).cos()) / k
}

/// Brownian sheet `W(t, x) = sum_j beta_j(t) <1_[0,x], e_j>` from `n_modes` modes.
pub fn field_covariance_test(
    stream: &mut RngStream,
    (t, s): (f64, f64),
    (x, y): (f64, f64),
    n_samples: usize,
    n_modes: usize,
) -> Result<CovarianceEstimate> {
    if n_samples < 100 {
        return Err(Error::usage(format!(
            "covariance test needs >= 100 samples, got {n_samples}"
        )));
    }
    if !(t > 0.0 && s > 0.0) {
        return Err(Error::domain("times must be > 0"));
    }
    if !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0) {
        return Err(Error::domain("points must lie in (0, 1)"));
    }
    let (early, late) = if t <= s { (t, s) } else { (s, t) };
    let cx: Vec<f64> = (1..=n_modes).map(|j| indicator_coeff(j, x)).collect();
    let cy: Vec<f64> = (1..=n_modes).map(|j| indicator_coeff(j, y)).collect();
    let (sd_early, sd_gap) = (early.sqrt(), (late - early).sqrt());

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let (mut w_early_x, mut w_early_y, mut w_late_x, mut w_late_y) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..n_modes {
            let b_early = sd_early * stream.standard_normal();
            let b_late = b_early + sd_gap * stream.standard_normal();
            w_early_x += b_early * cx[j];
            w_early_y += b_early * cy[j];
            w_late_x += b_late * cx[j];
            w_late_y += b_late * cy[j];
        }
        let prod = if t <= s {
            w_early_x * w_late_y
        } else {
            w_late_x * w_early_y
        };
        sum += prod;
        sum_sq += prod * prod;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    Ok(CovarianceEstimate {
        empirical: mean,
        exact: early * x.min(y),
        truncated_exact: early * cx.iter().zip(&cy).map(|(a, b)| a * b).sum::<f64>(),
        std_error: (var / n).sqrt(),
        n_samples,
    })
}
