//! Real, mean-zero fields stored as Hermitian-symmetric Fourier coefficients.
//!
//! Coefficients follow `φ̂(k) = (2π)⁻² ∫ φ(x) e^{-ik·x} dx`, so that
//! `φ(x) = Σ φ̂(k) e^{ik·x}`. The norm used throughout is the coefficient
//! norm `‖φ‖² = Σ |φ̂(k)|²`, which equals the spatial mean of `φ²`.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::{WaveGrid, Wavenumber};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<WaveGrid>,
    coeff: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Arc<WaveGrid>) -> Self {
        Self { grid: Arc::clone(grid), coeff: vec![ZERO; grid.len()] }
    }

    /// Builds a field from `(k, φ̂(k))` pairs; the conjugate entry at `-k` is
    /// filled in automatically.
    pub fn from_modes(grid: &Arc<WaveGrid>, modes: &[(Wavenumber, Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(grid);
        for &(k, c) in modes {
            f.set_pair(k, c)?;
        }
        Ok(f)
    }

    /// Real field with a single conjugate pair, `c e_k + c̄ e_{-k}`.
    pub fn single_pair(grid: &Arc<WaveGrid>, k: Wavenumber, c: Complex64) -> Result<Self> {
        Self::from_modes(grid, &[(k, c)])
    }

    /// Hermitian Gaussian field: each active pair gets an independent complex
    /// normal coefficient with `E|φ̂(k)|² = amplitude(|k|)²`.
    pub fn random<R: Rng + ?Sized>(
        grid: &Arc<WaveGrid>,
        rng: &mut R,
        amplitude: impl Fn(f64) -> f64,
    ) -> Self {
        let mut f = Self::zeros(grid);
        for &idx in grid.pair_representatives() {
            let a = amplitude(grid.ksq(idx).sqrt());
            let c = complex_normal(rng, a * a);
            f.set_index_pair(idx, c);
        }
        f
    }

    pub(crate) fn from_raw(grid: &Arc<WaveGrid>, coeff: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeff.len(), grid.len());
        Self { grid: Arc::clone(grid), coeff }
    }

    pub fn grid(&self) -> &Arc<WaveGrid> {
        &self.grid
    }

    /// Dense coefficient array in FFT order (see [`WaveGrid`]).
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeff
    }

    #[cfg(test)]
    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeff
    }

    pub fn coefficient(&self, k: Wavenumber) -> Complex64 {
        match self.grid.index_of(k) {
            Some(i) if self.grid.is_active_index(i) && self.grid.wavenumber(i) == k => self.coeff[i],
            _ => ZERO,
        }
    }

    pub fn set_pair(&mut self, k: Wavenumber, c: Complex64) -> Result<()> {
        if !self.grid.is_active(k) {
            return Err(Error::InactiveMode(k.k1, k.k2));
        }
        let idx = self.grid.index_of(k).expect("active mode is representable");
        self.set_index_pair(idx, c);
        Ok(())
    }

    /// Sets one stored coefficient without touching its conjugate partner.
    pub(crate) fn set_index(&mut self, idx: usize, c: Complex64) {
        self.coeff[idx] = c;
    }

    pub(crate) fn set_index_pair(&mut self, idx: usize, c: Complex64) {
        let j = self.grid.conj_index(idx);
        if j == idx {
            self.coeff[idx] = Complex64::new(c.re, 0.0);
        } else {
            self.coeff[idx] = c;
            self.coeff[j] = c.conj();
        }
    }

    /// Iterates `(k, φ̂(k))` over the active set.
    pub fn modes(&self) -> impl Iterator<Item = (Wavenumber, Complex64)> + '_ {
        self.grid.active_indices().iter().map(move |&i| (self.grid.wavenumber(i), self.coeff[i]))
    }

    /// Real inner product `Σ Re(conj(f̂) ĝ)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_same_grid(&self.grid, &other.grid);
        self.coeff.iter().zip(&other.coeff).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeff.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.iter().all(|c| *c == ZERO)
    }

    pub fn is_finite(&self) -> bool {
        self.coeff.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|_, c| c * s)
    }

    /// Applies `f(idx, coefficient)` on the active set; inactive slots stay zero.
    pub fn map(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let mut out = Self::zeros(&self.grid);
        for &i in self.grid.active_indices() {
            out.coeff[i] = f(i, self.coeff[i]);
        }
        out
    }

    /// Multiplies each active mode by a real function of `|k|²`.
    pub fn map_ksq(&self, f: impl Fn(f64) -> f64) -> Self {
        self.map(|i, c| c * f(self.grid.ksq(i)))
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_same_grid(&self.grid, &other.grid);
        for (x, y) in self.coeff.iter_mut().zip(&other.coeff) {
            *x += y * a;
        }
    }

    /// Largest deviation from `φ̂(-k) = conj(φ̂(k))` and from zero outside
    /// the active set.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for (i, c) in self.coeff.iter().enumerate() {
            if g.is_active_index(i) {
                worst = worst.max((c - self.coeff[g.conj_index(i)].conj()).norm());
            } else {
                worst = worst.max(c.norm());
            }
        }
        worst
    }

    /// Copies the modes shared with `target` onto it (zero padding or
    /// spectral truncation).
    pub fn resample(&self, target: &Arc<WaveGrid>) -> Self {
        if target.same_as(&self.grid) {
            return Self { grid: Arc::clone(target), coeff: self.coeff.clone() };
        }
        let mut out = Self::zeros(target);
        for &i in self.grid.active_indices() {
            let k = self.grid.wavenumber(i);
            if let Some(j) = target.index_of(k) {
                if target.is_active_index(j) && target.wavenumber(j) == k {
                    out.coeff[j] = self.coeff[i];
                }
            }
        }
        out
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// Two-component field; `divergence_free` records whether the field came out
/// of a projection that guarantees `k · û(k) = 0`.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub c1: SpectralField,
    pub c2: SpectralField,
    divergence_free: bool,
}

impl VectorField {
    pub fn new(c1: SpectralField, c2: SpectralField) -> Result<Self> {
        check_grids(&c1, &c2)?;
        Ok(Self { c1, c2, divergence_free: false })
    }

    pub(crate) fn solenoidal(c1: SpectralField, c2: SpectralField) -> Self {
        Self { c1, c2, divergence_free: true }
    }

    pub fn zeros(grid: &Arc<WaveGrid>) -> Self {
        Self::solenoidal(SpectralField::zeros(grid), SpectralField::zeros(grid))
    }

    pub fn grid(&self) -> &Arc<WaveGrid> {
        self.c1.grid()
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn norm_sq(&self) -> f64 {
        self.c1.norm_sq() + self.c2.norm_sq()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.c1.inner(&other.c1) + self.c2.inner(&other.c2)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { c1: self.c1.scaled(s), c2: self.c2.scaled(s), divergence_free: self.divergence_free }
    }

    pub fn map_ksq(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        Self { c1: self.c1.map_ksq(f), c2: self.c2.map_ksq(f), divergence_free: self.divergence_free }
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.c1.axpy(a, &other.c1);
        self.c2.axpy(a, &other.c2);
        self.divergence_free &= other.divergence_free;
    }

    pub fn is_finite(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }

    /// `max_k |k · û(k)| / |û(k)|` over modes with nonzero coefficient.
    pub fn divergence_defect(&self) -> f64 {
        let g = self.grid();
        let mut worst: f64 = 0.0;
        for &i in g.active_indices() {
            let k = g.wavenumber(i);
            let (a, b) = (self.c1.coeffs()[i], self.c2.coeffs()[i]);
            let mag = (a.norm_sqr() + b.norm_sqr()).sqrt();
            if mag > 0.0 {
                let d = a * k.k1 as f64 + b * k.k2 as f64;
                worst = worst.max(d.norm() / (mag * k.norm()));
            }
        }
        worst
    }

    pub fn resample(&self, target: &Arc<WaveGrid>) -> Self {
        Self {
            c1: self.c1.resample(target),
            c2: self.c2.resample(target),
            divergence_free: self.divergence_free,
        }
    }
}

pub(crate) fn check_grids(a: &SpectralField, b: &SpectralField) -> Result<()> {
    if a.grid().same_as(b.grid()) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

fn assert_same_grid(a: &WaveGrid, b: &WaveGrid) {
    assert!(a.same_as(b), "fields live on different grids");
}

/// Complex Gaussian with `E|z|² = variance` and `E z² = 0`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DealiasFraction;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<WaveGrid> {
        WaveGrid::new(16, DealiasFraction::TWO_THIRDS).unwrap()
    }

    #[test]
    fn single_pair_is_hermitian() {
        let g = grid();
        let f = SpectralField::single_pair(&g, Wavenumber::new(2, -1), Complex64::new(1.0, 3.0)).unwrap();
        assert_eq!(f.coefficient(Wavenumber::new(-2, 1)), Complex64::new(1.0, -3.0));
        assert_eq!(f.hermitian_defect(), 0.0);
        assert_eq!(f.norm_sq(), 20.0);
    }

    #[test]
    fn inactive_modes_rejected() {
        let g = grid();
        let e = SpectralField::single_pair(&g, Wavenumber::new(7, 0), Complex64::new(1.0, 0.0));
        assert_eq!(e.unwrap_err(), Error::InactiveMode(7, 0));
        assert!(SpectralField::single_pair(&g, Wavenumber::new(0, 0), Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn random_fields_are_hermitian() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = SpectralField::random(&g, &mut rng, |_| 1.0);
        assert_eq!(f.hermitian_defect(), 0.0);
        assert!(f.norm_sq() > 0.0);
    }

    #[test]
    fn resample_pads_and_truncates() {
        let g = grid();
        let big = WaveGrid::new(32, DealiasFraction::TWO_THIRDS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = SpectralField::random(&g, &mut rng, |_| 1.0);
        let up = f.resample(&big);
        assert!((up.norm_sq() - f.norm_sq()).abs() < 1e-14);
        let back = up.resample(&g);
        assert_eq!(back.coeffs(), f.coeffs());
    }
}
