//! Stochastic forcing `Pξ = Σ_k e_k (ιk^⊥/|k|^{1+a/2}) dζ^k` and exact
//! per-mode Ornstein-Uhlenbeck increments.
//!
//! Draws are made once per Hermitian pair, in the order of
//! [`WaveGrid::pair_representatives`]. Self-conjugate modes (Nyquist
//! corners of undealiased grids) carry no noise.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{complex_normal, SpectralField, VectorField};
use crate::grid::WaveGrid;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug)]
pub struct NoiseModel {
    alpha: f64,
    sigma: f64,
    seed: u64,
    grid: Arc<WaveGrid>,
}

impl NoiseModel {
    /// `sigma = 0` is accepted and yields the deterministic control.
    pub fn new(grid: &Arc<WaveGrid>, alpha: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(alpha > 10.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("noise exponent {alpha} must exceed 10")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("noise amplitude {sigma} must be nonnegative")));
        }
        Ok(Self { alpha, sigma, seed, grid: Arc::clone(grid) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &Arc<WaveGrid> {
        &self.grid
    }

    /// Fresh generator for this model's stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn forced(&self, idx: usize) -> bool {
        self.grid.conj_index(idx) != idx
    }

    /// Velocity multiplier `ιk^⊥ |k|^{-1-a/2}` at a storage index.
    pub fn velocity_multiplier(&self, idx: usize) -> [Complex64; 2] {
        let k = self.grid.kderiv(idx);
        let s = self.grid.ksq(idx).powf(-0.5 - self.alpha / 4.0);
        [I * (k[1] * s), I * (-k[0] * s)]
    }

    /// Vorticity multiplier `|k|^{1-a/2}`.
    pub fn vorticity_multiplier(&self, idx: usize) -> f64 {
        self.grid.ksq(idx).powf(0.5 - self.alpha / 4.0)
    }

    /// Stationary variance `E|û(k)|² = σ²|k|^{-a}/(2|k|²)` of the linear
    /// (Ornstein-Uhlenbeck) velocity at mode `idx`.
    pub fn stationary_velocity_variance(&self, idx: usize) -> f64 {
        let k2 = self.grid.ksq(idx);
        self.sigma * self.sigma * k2.powf(-self.alpha / 2.0) / (2.0 * k2)
    }

    /// Turns per-mode scalar increments into velocity increments.
    pub fn velocity_from(&self, eta: &SpectralField) -> VectorField {
        let c1 = eta.map(|i, c| self.velocity_multiplier(i)[0] * c);
        let c2 = eta.map(|i, c| self.velocity_multiplier(i)[1] * c);
        VectorField::solenoidal(c1, c2)
    }

    /// Turns per-mode scalar increments into vorticity increments.
    pub fn vorticity_from(&self, eta: &SpectralField) -> SpectralField {
        eta.map(|i, c| self.vorticity_multiplier(i) * c)
    }
}

/// Variance of the OU increment `∫_0^h e^{-decay(h-s)} dW_s` when
/// `E|dW|² = drive_var ds`.
pub fn ou_variance(decay: f64, drive_var: f64, h: f64) -> f64 {
    if decay == 0.0 {
        drive_var * h
    } else {
        -drive_var * (-2.0 * decay * h).exp_m1() / (2.0 * decay)
    }
}

/// One exact OU step for a single complex coefficient.
pub fn ou_update<R: Rng + ?Sized>(coeff: Complex64, decay: f64, drive_var: f64, h: f64, rng: &mut R) -> Complex64 {
    coeff * (-decay * h).exp() + complex_normal(rng, ou_variance(decay, drive_var, h))
}

fn draw<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R, var: impl Fn(f64) -> f64) -> SpectralField {
    let g = &model.grid;
    let mut out = SpectralField::zeros(g);
    for &idx in g.pair_representatives() {
        let c = complex_normal(rng, var(g.ksq(idx)));
        if model.forced(idx) {
            out.set_index_pair(idx, c);
        }
    }
    out
}

/// Brownian increments `Δζ^k` over a step `h`, `E|Δζ^k|² = σ²h`.
pub fn sample_zeta_increments<R: Rng + ?Sized>(model: &NoiseModel, h: f64, rng: &mut R) -> SpectralField {
    let v = model.sigma * model.sigma * h;
    draw(model, rng, |_| v)
}

/// Stochastic-convolution increments `∫_0^h e^{-|k|²(h-s)} dζ^k_s`.
pub fn sample_ou_increments<R: Rng + ?Sized>(model: &NoiseModel, h: f64, rng: &mut R) -> SpectralField {
    let s2 = model.sigma * model.sigma;
    draw(model, rng, |k2| ou_variance(k2, s2, h))
}

/// Per-mode draw from the stationary law of the OU coordinates,
/// `E|η_k|² = σ²/(2|k|²)`. Feed through [`NoiseModel::velocity_from`] or
/// [`NoiseModel::vorticity_from`] for a stationary linear flow.
pub fn sample_stationary_ou<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> SpectralField {
    let s2 = model.sigma * model.sigma;
    draw(model, rng, |k2| s2 / (2.0 * k2))
}

pub fn forcing_velocity_increment<R: Rng + ?Sized>(model: &NoiseModel, h: f64, rng: &mut R) -> VectorField {
    model.velocity_from(&sample_zeta_increments(model, h, rng))
}

pub fn vorticity_forcing_increment<R: Rng + ?Sized>(model: &NoiseModel, h: f64, rng: &mut R) -> SpectralField {
    model.vorticity_from(&sample_zeta_increments(model, h, rng))
}

/// Source of stochastic-convolution increments for the time steppers.
pub trait NoiseSource {
    fn model(&self) -> &NoiseModel;
    /// Per-mode increments `∫_t^{t+h} e^{-|k|²(t+h-s)} dζ^k_s`.
    fn ou_increment(&mut self, h: f64) -> SpectralField;
}

/// Increments drawn directly from a seeded generator.
#[derive(Clone, Debug)]
pub struct RngNoise {
    model: NoiseModel,
    rng: ChaCha8Rng,
}

impl RngNoise {
    pub fn new(model: NoiseModel) -> Self {
        let rng = model.rng();
        Self { model, rng }
    }

    pub fn with_rng(model: NoiseModel, rng: ChaCha8Rng) -> Self {
        Self { model, rng }
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }
}

impl NoiseSource for RngNoise {
    fn model(&self) -> &NoiseModel {
        &self.model
    }

    fn ou_increment(&mut self, h: f64) -> SpectralField {
        sample_ou_increments(&self.model, h, &mut self.rng)
    }
}

/// Composes `substeps` consecutive increments of the inner source into one.
/// A run driven by `RefinedNoise { substeps: 2 }` at step `h` sees the same
/// Brownian path as a run driven by the inner source at step `h/2`.
#[derive(Clone, Debug)]
pub struct RefinedNoise<S> {
    inner: S,
    substeps: usize,
}

impl<S: NoiseSource> RefinedNoise<S> {
    pub fn new(inner: S, substeps: usize) -> Self {
        assert!(substeps >= 1);
        Self { inner, substeps }
    }
}

impl<S: NoiseSource> NoiseSource for RefinedNoise<S> {
    fn model(&self) -> &NoiseModel {
        self.inner.model()
    }

    fn ou_increment(&mut self, h: f64) -> SpectralField {
        let hs = h / self.substeps as f64;
        let mut acc = self.inner.ou_increment(hs);
        for _ in 1..self.substeps {
            let next = self.inner.ou_increment(hs);
            acc = acc.map_ksq(|k2| (-k2 * hs).exp());
            acc.axpy(1.0, &next);
        }
        acc
    }
}
