//! Browser bindings: a live trajectory, a running histogram of `|u|_{L^2}`
//! and a steering experiment.

use fsbe_core::dynamics::{Integrator, ModelConfig};
use fsbe_core::ergodicity::{uniform_edges, EmpiricalMeasure, Lab};
use fsbe_core::noise::RngStream;
use fsbe_core::spectral::SpectralField;
use wasm_bindgen::prelude::*;

fn js(e: fsbe_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    integrator: Integrator,
    stream: RngStream,
    u: SpectralField,
    time: f64,
    histogram: EmpiricalMeasure,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(alpha: f64, gamma: f64, seed: u32) -> Result<Demo, JsError> {
        let cfg = ModelConfig {
            alpha,
            gamma,
            ..ModelConfig::default()
        };
        let integrator = Integrator::new(cfg).map_err(js)?;
        let u = SpectralField::zeros(integrator.modes());
        let edges = uniform_edges(0.0, 1.5, 60).map_err(js)?;
        Ok(Demo {
            integrator,
            stream: RngStream::new(seed as u64, 0),
            u,
            time: 0.0,
            histogram: EmpiricalMeasure::new("l2_norm", edges, 0.0).map_err(js)?,
            seed: seed as u64,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances `steps` steps, adding each state to the histogram.
    pub fn advance(&mut self, steps: u32) -> Result<(), JsError> {
        for _ in 0..steps {
            self.u = self
                .integrator
                .step_mild(&self.u, self.time, &mut self.stream)
                .map_err(js)?;
            self.time += self.integrator.dt();
            self.histogram.add(self.u.l2_norm());
        }
        Ok(())
    }

    /// Current state on `points` equispaced interior points.
    pub fn profile(&self, points: u32) -> Vec<f64> {
        let n = points.max(2) as usize;
        (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                self.u
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * std::f64::consts::SQRT_2 * (std::f64::consts::PI * (j + 1) as f64 * x).sin())
                    .sum()
            })
            .collect()
    }

    /// Normalised bin masses of the running histogram.
    pub fn histogram(&self) -> Vec<f64> {
        self.histogram.probabilities()
    }

    pub fn histogram_range(&self) -> Vec<f64> {
        vec![self.histogram.edges[0], *self.histogram.edges.last().unwrap_or(&1.0)]
    }

    /// Restarts from `amplitude * e_1` with an empty histogram.
    pub fn reset(&mut self, amplitude: f64) -> Result<(), JsError> {
        self.u = SpectralField::mode(self.integrator.modes(), 1, amplitude).map_err(js)?;
        self.time = 0.0;
        let edges = self.histogram.edges.clone();
        self.histogram = EmpiricalMeasure::new("l2_norm", edges, 0.0).map_err(js)?;
        Ok(())
    }

    /// Fraction of `paths` steered paths from the current state that end within
    /// `eps` of `a1 e_1 + a2 e_2 + a3 e_3` at time `t`.
    pub fn steer(&self, a1: f64, a2: f64, a3: f64, eps: f64, t: f64, paths: u32) -> Result<f64, JsError> {
        let n = self.integrator.modes();
        let mut target = vec![0.0; n];
        for (slot, a) in target.iter_mut().zip([a1, a2, a3]) {
            *slot = a;
        }
        let y = SpectralField::from_coeffs(target).map_err(js)?;
        let lab = Lab::new(self.integrator.config().clone(), self.seed, 1).map_err(js)?;
        let h = lab
            .hitting_probability(&self.u, &y, eps, t, paths as usize, true)
            .map_err(js)?;
        Ok(h.frequency)
    }
}
