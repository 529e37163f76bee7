//! Sine-mode representation of fields on (0, 1) with Dirichlet conditions.
//!
//! Fields are stored as coefficients on the orthonormal basis
//! `e_j(x) = sqrt(2) sin(pi j x)`, `j = 1..=N`, which diagonalises the
//! Dirichlet Laplacian with eigenvalues `lambda_j = (pi j)^2`. Fractional
//! powers, the damped semigroup and Sobolev norms act mode by mode.
//!
//! [`SpectralBasis`] moves between coefficients and samples on the interior
//! collocation grid `x_i = i / (M + 1)` with type-I sine/cosine transforms
//! built on a complex FFT of length `2 (M + 1)`.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Dirichlet Laplacian eigenvalue `(pi j)^2` for a 1-based mode index.
#[inline]
pub fn lambda(j: usize) -> f64 {
    let k = PI * j as f64;
    k * k
}

/// Fractional dissipation rates `lambda_j^{alpha/2} = (pi j)^alpha`, `j = 1..=n`.
pub fn dissipation_rates(n: usize, alpha: f64) -> Vec<f64> {
    (1..=n).map(|j| (PI * j as f64).powf(alpha)).collect()
}

/// Finite sine-mode coefficient vector; `coeffs[j - 1]` multiplies `e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        Self {
            coeffs: vec![0.0; n],
        }
    }

    /// Builds a field, rejecting non-finite coefficients.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(pos) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!(
                "coefficient {} is not finite",
                pos + 1
            )));
        }
        Ok(Self { coeffs })
    }

    pub(crate) fn from_vec(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `amplitude * e_j` in an `n`-mode field.
    pub fn mode(n: usize, j: usize, amplitude: f64) -> Result<Self> {
        if j == 0 || j > n {
            return Err(Error::domain(format!("mode {j} outside 1..={n}")));
        }
        let mut f = Self::zeros(n);
        f.coeffs[j - 1] = amplitude;
        Ok(f)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of `e_j` (1-based); zero beyond the stored modes.
    pub fn coeff(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        self.coeffs.get(j - 1).copied().unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `|f|_{L^2}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_vec(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_vec(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_vec(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    /// Copy resized to `n` modes (zero padded or truncated).
    pub fn resized(&self, n: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.resize(n, 0.0);
        Self::from_vec(c)
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn map_modes(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self::from_vec(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, &a)| f(i + 1, a))
                .collect(),
        )
    }
}

/// Smoothness/integrability pair `(s, p)` of `H^{s,p}(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevIndex {
    pub s: f64,
    pub p: f64,
}

impl SobolevIndex {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !s.is_finite() {
            return Err(Error::domain(format!("invalid Sobolev index (s={s}, p={p})")));
        }
        Ok(Self { s, p })
    }

    pub fn hilbert(s: f64) -> Self {
        Self { s, p: 2.0 }
    }
}

/// Samples at the interior collocation points `x_i = i / (M + 1)`, `i = 1..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub samples: Vec<f64>,
    /// Mode count of the field this grid was synthesised from.
    pub source_modes: usize,
}

impl GridField {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let h = 1.0 / (self.samples.len() + 1) as f64;
        (1..=self.samples.len()).map(move |i| i as f64 * h)
    }

    /// `|g|_{L^2}` by the rectangle rule (exact for sine polynomials of degree `<= M`).
    pub fn l2_norm(&self) -> f64 {
        let h = 1.0 / (self.samples.len() + 1) as f64;
        (h * self.samples.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// `|g|_{L^p}` by the rectangle rule; `p = inf` gives the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        }
        let h = 1.0 / (self.samples.len() + 1) as f64;
        (h * self.samples.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// `(lambda_j, e_j sampled on an M-point grid)`.
pub fn eigen_pair(j: i64, grid: usize) -> Result<(f64, GridField)> {
    if j < 1 {
        return Err(Error::domain(format!("eigen index must be >= 1, got {j}")));
    }
    let j = j as usize;
    let h = 1.0 / (grid + 1) as f64;
    let samples = (1..=grid)
        .map(|i| SQRT_2 * (PI * j as f64 * i as f64 * h).sin())
        .collect();
    Ok((
        lambda(j),
        GridField {
            samples,
            source_modes: j,
        },
    ))
}

/// `A^s f`: coefficient `j` multiplied by `lambda_j^s`.
pub fn apply_fractional_power(f: &SpectralField, s: f64) -> SpectralField {
    if s == 0.0 {
        return f.clone();
    }
    f.map_modes(|j, a| a * lambda(j).powf(s))
}

/// `exp(-t (A^{alpha/2} + gamma)) f`.
pub fn semigroup_apply(f: &SpectralField, t: f64, alpha: f64, gamma: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.clone());
    }
    Ok(f.map_modes(|j, a| a * (-(lambda(j).powf(alpha / 2.0) + gamma) * t).exp()))
}

/// Homogeneous Sobolev norm. For `p = 2` this is `(sum lambda_j^s a_j^2)^{1/2}`;
/// otherwise the grid `L^p` norm of `A^{s/2} f` on `grid` points.
pub fn sobolev_norm(f: &SpectralField, idx: SobolevIndex, grid: Option<usize>) -> Result<f64> {
    if idx.p == 2.0 {
        return Ok(f
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, a)| lambda(i + 1).powf(idx.s) * a * a)
            .sum::<f64>()
            .sqrt());
    }
    let m = grid.ok_or_else(|| {
        Error::usage(format!("H^{{s,p}} norm with p = {} needs a grid size", idx.p))
    })?;
    if m < f.len() {
        return Err(Error::usage(format!(
            "grid of {m} points cannot resolve {} modes",
            f.len()
        )));
    }
    let basis = SpectralBasis::new(f.len(), m)?;
    let g = basis.to_grid(&apply_fractional_power(f, idx.s / 2.0));
    Ok(g.lp_norm(idx.p))
}

/// Radial retraction onto the closed `L^2` ball of radius `n`.
pub fn truncate_pi_n(f: &SpectralField, n: f64) -> Result<SpectralField> {
    if !(n > 0.0) {
        return Err(Error::domain(format!("truncation radius must be > 0, got {n}")));
    }
    let norm = f.l2_norm();
    if norm <= n {
        Ok(f.clone())
    } else {
        Ok(f.scaled(n / norm))
    }
}

/// `int_0^T ||exp(-r A_alpha)||_HS^2 dr` truncated to `n` modes.
pub fn hs_integral(t: f64, alpha: f64, n: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("horizon must be >= 0, got {t}")));
    }
    Ok(dissipation_rates(n, alpha)
        .into_iter()
        .map(|mu| -(-2.0 * mu * t).exp_m1() / (2.0 * mu))
        .sum())
}

/// Sine/cosine transforms between `n` modes and an `m`-point interior grid.
#[derive(Clone)]
pub struct SpectralBasis {
    n_modes: usize,
    grid: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralBasis")
            .field("n_modes", &self.n_modes)
            .field("grid", &self.grid)
            .finish()
    }
}

impl SpectralBasis {
    /// Requires `grid >= n_modes`; the convective term is alias-free once
    /// `grid >= 2 n_modes`.
    pub fn new(n_modes: usize, grid: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::domain("mode count must be >= 1"));
        }
        if grid < n_modes {
            return Err(Error::LossyTransform {
                modes: n_modes,
                grid,
            });
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * (grid + 1));
        Ok(Self { n_modes, grid, fft })
    }

    /// Basis with the dealiasing grid `2 n_modes`.
    pub fn dealiased(n_modes: usize) -> Result<Self> {
        Self::new(n_modes, 2 * n_modes)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    fn intervals(&self) -> usize {
        self.grid + 1
    }

    /// `S_k = sum_{i=1}^{M} v_i sin(pi k i / L)` for `k = 1..=M`, with `v`
    /// zero padded to `M` entries.
    fn dst1(&self, v: &[f64]) -> Vec<f64> {
        let l = self.intervals();
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * l];
        for (i, &x) in v.iter().enumerate().take(self.grid) {
            buf[i + 1].re = x;
            buf[2 * l - i - 1].re = -x;
        }
        self.fft.process(&mut buf);
        (1..=self.grid).map(|k| -0.5 * buf[k].im).collect()
    }

    /// `C_k = sum_{i=1}^{M} w_i cos(pi k i / L)` for `k = 0..=M`.
    fn dct1_interior(&self, w: &[f64]) -> Vec<f64> {
        let l = self.intervals();
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * l];
        for (i, &x) in w.iter().enumerate() {
            buf[i + 1].re = x;
            buf[2 * l - i - 1].re = x;
        }
        self.fft.process(&mut buf);
        (0..=self.grid).map(|k| 0.5 * buf[k].re).collect()
    }

    /// Grid samples of a coefficient vector with at most `M` entries.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        self.dst1(coeffs).into_iter().map(|s| SQRT_2 * s).collect()
    }

    /// First `n_modes` sine coefficients of grid samples.
    pub fn analyze(&self, samples: &[f64]) -> Vec<f64> {
        let scale = SQRT_2 / self.intervals() as f64;
        let mut s = self.dst1(samples);
        s.truncate(self.n_modes);
        s.iter_mut().for_each(|v| *v *= scale);
        s
    }

    pub fn to_grid(&self, f: &SpectralField) -> GridField {
        if f.len() > self.grid {
            return to_grid_direct(f, self.grid);
        }
        GridField {
            samples: self.synthesize(f.coeffs()),
            source_modes: f.len(),
        }
    }

    pub fn from_grid(&self, g: &GridField) -> Result<SpectralField> {
        if g.len() != self.grid {
            return Err(Error::ShapeMismatch {
                expected: self.grid,
                got: g.len(),
            });
        }
        if g.source_modes > self.grid {
            return Err(Error::LossyTransform {
                modes: g.source_modes,
                grid: g.len(),
            });
        }
        Ok(SpectralField::from_vec(self.analyze(&g.samples)))
    }

    /// `d/dx (u^2)` projected on the first `n_modes` sine modes.
    ///
    /// The square is formed on the grid and expanded in `cos(k pi x)`; a
    /// cosine coefficient `c_k` differentiates to `-k pi c_k sin(k pi x)`.
    /// Exact (no aliasing into kept modes) when `grid + 1 > 3 n_modes / 2`.
    pub fn convective_term(&self, f: &SpectralField) -> SpectralField {
        let u = self.synthesize(f.coeffs());
        let w: Vec<f64> = u.iter().map(|v| v * v).collect();
        self.convective_from_square(&w)
    }

    /// `d/dx w` for grid samples `w` of a function vanishing at both ends.
    pub(crate) fn convective_from_square(&self, w: &[f64]) -> SpectralField {
        let c = self.dct1_interior(w);
        let scale = SQRT_2 * PI / self.intervals() as f64;
        SpectralField::from_vec(
            (1..=self.n_modes)
                .map(|k| -(k as f64) * scale * c[k])
                .collect(),
        )
    }
}

fn to_grid_direct(f: &SpectralField, m: usize) -> GridField {
    let h = 1.0 / (m + 1) as f64;
    let samples = (1..=m)
        .map(|i| {
            let x = i as f64 * h;
            f.coeffs()
                .iter()
                .enumerate()
                .map(|(j, a)| a * SQRT_2 * (PI * (j + 1) as f64 * x).sin())
                .sum()
        })
        .collect();
    GridField {
        samples,
        source_modes: f.len(),
    }
}

/// Samples `f` on `m` interior points. When `m < N` the samples are still
/// exact but the grid is flagged as lossy for [`from_grid`].
pub fn to_grid(f: &SpectralField, m: usize) -> Result<GridField> {
    if m == 0 {
        return Err(Error::domain("grid must have at least one point"));
    }
    if m < f.len() {
        return Ok(to_grid_direct(f, m));
    }
    Ok(SpectralBasis::new(f.len().max(1), m)?.to_grid(f))
}

/// Recovers the `source_modes` sine coefficients of a grid field.
pub fn from_grid(g: &GridField) -> Result<SpectralField> {
    if g.source_modes > g.len() {
        return Err(Error::LossyTransform {
            modes: g.source_modes,
            grid: g.len(),
        });
    }
    SpectralBasis::new(g.source_modes.max(1), g.len())?.from_grid(g)
}

/// Dealiased `d/dx (f^2)` on a `2N` grid.
pub fn convective_term(f: &SpectralField) -> SpectralField {
    if f.is_empty() {
        return f.clone();
    }
    SpectralBasis::dealiased(f.len())
        .expect("non-empty field")
        .convective_term(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::from_coeffs((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Product-to-sum oracle for d/dx(u^2):
    /// coefficient k = (pi/sqrt2) k [sum_{j+l=k} a_j a_l - sum_{|j-l|=k} a_j a_l].
    fn convective_oracle(f: &SpectralField) -> Vec<f64> {
        let n = f.len();
        let a = f.coeffs();
        let mut out = vec![0.0; n];
        for j in 1..=n {
            for l in 1..=n {
                let p = a[j - 1] * a[l - 1];
                let s = j + l;
                if s <= n {
                    out[s - 1] += s as f64 * p;
                }
                let d = j.abs_diff(l);
                if d >= 1 && d <= n {
                    out[d - 1] -= d as f64 * p;
                }
            }
        }
        out.iter().map(|v| v * PI / SQRT_2).collect()
    }

    #[test]
    fn eigen_pairs() {
        let (l1, _) = eigen_pair(1, 8).unwrap();
        assert_relative_eq!(l1, 9.869604401089358, epsilon = 1e-12);
        let (l3, _) = eigen_pair(3, 8).unwrap();
        assert_relative_eq!(l3, 88.82643960980423, epsilon = 1e-10);
        // grid of 1 point sits at x = 0.5
        let (_, g) = eigen_pair(1, 1).unwrap();
        assert_relative_eq!(g.samples[0], SQRT_2, epsilon = 1e-15);
        assert!(eigen_pair(0, 4).is_err());
        assert!(eigen_pair(-2, 4).is_err());
    }

    #[test]
    fn fractional_power_examples() {
        let f = random_field(12, 1);
        assert_eq!(apply_fractional_power(&f, 0.0), f);
        let e1 = SpectralField::mode(4, 1, 1.0).unwrap();
        assert_relative_eq!(apply_fractional_power(&e1, 0.5).coeff(1), PI, epsilon = 1e-14);
        let twice = apply_fractional_power(&apply_fractional_power(&f, 1.0), 1.0);
        let once = apply_fractional_power(&f, 2.0);
        for (a, b) in twice.coeffs().iter().zip(once.coeffs()) {
            assert_relative_eq!(a, b, max_relative = 1e-13);
        }
    }

    #[test]
    fn semigroup_examples() {
        let f = random_field(8, 2);
        assert_eq!(semigroup_apply(&f, 0.0, 1.8, 3.0).unwrap(), f);
        let e1 = SpectralField::mode(4, 1, 1.0).unwrap();
        let s = semigroup_apply(&e1, 0.1, 2.0, 0.0).unwrap();
        assert_relative_eq!(s.coeff(1), (-0.1 * PI * PI).exp(), epsilon = 1e-15);
        assert_relative_eq!(s.coeff(1), 0.37259, epsilon = 2e-4);
        assert!(semigroup_apply(&f, -1.0, 1.8, 0.0).is_err());

        let mut prev = f.l2_norm();
        for gamma in [1.0, 10.0, 100.0, 1000.0] {
            let n = semigroup_apply(&f, 0.01, 1.8, gamma).unwrap().l2_norm();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn sobolev_examples() {
        let e1 = SpectralField::mode(6, 1, 1.0).unwrap();
        assert_relative_eq!(sobolev_norm(&e1, SobolevIndex::hilbert(0.0), None).unwrap(), 1.0);
        let v = sobolev_norm(&e1, SobolevIndex::hilbert(0.9), None).unwrap();
        assert_relative_eq!(v, PI.powf(0.9), epsilon = 1e-12);
        assert_relative_eq!(v, 2.8000, epsilon = 2e-3);
        let z = SpectralField::zeros(6);
        assert_eq!(sobolev_norm(&z, SobolevIndex::hilbert(0.7), None).unwrap(), 0.0);
        assert_eq!(
            sobolev_norm(&z, SobolevIndex::new(0.3, 4.0).unwrap(), Some(24)).unwrap(),
            0.0
        );
        assert!(matches!(
            sobolev_norm(&e1, SobolevIndex::new(0.3, 4.0).unwrap(), None),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn sobolev_lp_of_single_mode() {
        // |sqrt2 sin(pi x)|_{L^4}^4 = 4 * 3/8 = 3/2
        let e1 = SpectralField::mode(4, 1, 1.0).unwrap();
        let v = sobolev_norm(&e1, SobolevIndex::new(0.0, 4.0).unwrap(), Some(64)).unwrap();
        assert_relative_eq!(v, 1.5_f64.powf(0.25), epsilon = 1e-12);
    }

    #[test]
    fn grid_examples() {
        let e2 = SpectralField::mode(4, 2, 1.0).unwrap();
        let g = to_grid(&e2, 16).unwrap();
        for (x, v) in g.points().zip(&g.samples) {
            assert_relative_eq!(*v, SQRT_2 * (2.0 * PI * x).sin(), epsilon = 1e-13);
        }
        let z = to_grid(&SpectralField::zeros(5), 10).unwrap();
        assert!(z.samples.iter().all(|&v| v == 0.0));

        let f = random_field(64, 3);
        let back = from_grid(&to_grid(&f, 128).unwrap()).unwrap();
        let err = back.try_sub(&f).unwrap().l2_norm() / f.l2_norm();
        assert!(err <= 1e-12, "round-trip error {err}");
    }

    #[test]
    fn lossy_round_trip_is_flagged() {
        let f = random_field(10, 4);
        let g = to_grid(&f, 6).unwrap();
        assert_eq!(g.len(), 6);
        assert!(matches!(from_grid(&g), Err(Error::LossyTransform { .. })));
        // the samples themselves are still exact
        let direct = to_grid_direct(&f, 6);
        assert_eq!(g, direct);
    }

    #[test]
    fn parseval_on_grid() {
        for n in [1, 7, 64, 200, 512] {
            let f = random_field(n, n as u64);
            let g = to_grid(&f, n + 3).unwrap();
            assert_relative_eq!(g.l2_norm(), f.l2_norm(), max_relative = 1e-10);
        }
    }

    #[test]
    fn convective_examples() {
        let e1 = SpectralField::mode(6, 1, 1.0).unwrap();
        let b = convective_term(&e1);
        assert_relative_eq!(b.coeff(2), SQRT_2 * PI, epsilon = 1e-12);
        assert_relative_eq!(b.coeff(2), 4.44288, epsilon = 1e-5);
        for j in [1, 3, 4, 5, 6] {
            assert!(b.coeff(j).abs() < 1e-12);
        }
        assert_eq!(convective_term(&SpectralField::zeros(6)).l2_norm(), 0.0);
    }

    #[test]
    fn convective_matches_product_to_sum_oracle() {
        for (n, seed) in [(5, 10), (16, 11), (33, 12)] {
            let f = random_field(n, seed);
            let got = convective_term(&f);
            let want = convective_oracle(&f);
            for (g, w) in got.coeffs().iter().zip(&want) {
                assert_relative_eq!(g, w, epsilon = 1e-10 * n as f64);
            }
            // also exact on a non-power-of-two grid above 3N/2
            let basis = SpectralBasis::new(n, 3 * n / 2 + 1).unwrap();
            for (g, w) in basis.convective_term(&f).coeffs().iter().zip(&want) {
                assert_relative_eq!(g, w, epsilon = 1e-10 * n as f64);
            }
        }
    }

    #[test]
    fn convective_skew_symmetry() {
        for n in [32, 64, 128] {
            for seed in 0..20 {
                let f = random_field(n, 1000 * n as u64 + seed);
                let b = convective_term(&f);
                assert!(b.dot(&f).abs() <= 1e-10 * f.l2_norm().powi(3));
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let f = SpectralField::from_coeffs(vec![2.0, 0.0]).unwrap();
        assert_eq!(truncate_pi_n(&f, 3.0).unwrap(), f);
        let g = SpectralField::from_coeffs(vec![3.0, 4.0]).unwrap();
        let t = truncate_pi_n(&g, 3.0).unwrap();
        assert_relative_eq!(t.l2_norm(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(t.coeff(1) / t.coeff(2), 0.75, epsilon = 1e-15);
        assert_eq!(truncate_pi_n(&SpectralField::zeros(3), 1.0).unwrap().l2_norm(), 0.0);
        assert!(truncate_pi_n(&g, 0.0).is_err());
    }

    #[test]
    fn hs_integral_examples() {
        assert_eq!(hs_integral(0.0, 1.8, 50).unwrap(), 0.0);
        // alpha = 2, T, N large: sum 1/(2 pi^2 k^2) -> 1/12; tail ~ 1/(2 pi^2 N)
        let v = hs_integral(1e3, 2.0, 100_000).unwrap();
        assert_relative_eq!(v, 1.0 / 12.0, epsilon = 1e-6);
        // term-by-term monotonicity oracle
        let mut prev = 0.0;
        for t in [0.01, 0.1, 1.0, 10.0] {
            let v = hs_integral(t, 1.8, 64).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(hs_integral(50.0, 1.7, 64).unwrap() > hs_integral(50.0, 1.9, 64).unwrap());
        assert!(hs_integral(-1.0, 1.8, 4).is_err());
    }

    proptest! {
        #[test]
        fn semigroup_composes(t1 in 0.0..0.05f64, t2 in 0.0..0.05f64, gamma in 0.0..5.0f64, seed in 0u64..1000) {
            let f = random_field(24, seed);
            let a = semigroup_apply(&semigroup_apply(&f, t1, 1.7, gamma).unwrap(), t2, 1.7, gamma).unwrap();
            let b = semigroup_apply(&f, t1 + t2, 1.7, gamma).unwrap();
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                prop_assert!((x - y).abs() <= 1e-13 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn coercivity_identity(alpha in 1.5..2.0f64, seed in 0u64..1000) {
            let f = random_field(32, seed);
            let lhs = apply_fractional_power(&f, alpha / 2.0).dot(&f);
            let rhs = sobolev_norm(&f, SobolevIndex::hilbert(alpha / 2.0), None).unwrap().powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }

        #[test]
        fn norms_are_monotone_in_smoothness(s1 in -1.0..2.0f64, ds in 0.0..2.0f64, seed in 0u64..1000) {
            let f = random_field(20, seed);
            let lo = sobolev_norm(&f, SobolevIndex::hilbert(s1), None).unwrap();
            let hi = sobolev_norm(&f, SobolevIndex::hilbert(s1 + ds), None).unwrap();
            prop_assert!(lo <= hi * (1.0 + 1e-12));
        }

        #[test]
        fn grid_round_trip(n in 1usize..80, extra in 0usize..40, seed in 0u64..1000) {
            let f = random_field(n, seed);
            let back = from_grid(&to_grid(&f, n + extra).unwrap()).unwrap();
            prop_assert!(back.try_sub(&f).unwrap().l2_norm() <= 1e-12 * (1.0 + f.l2_norm()));
        }
    }
}
