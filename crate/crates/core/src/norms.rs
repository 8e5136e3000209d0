//! Sobolev and Hölder norms, spectral quantiles and the filamentation scale.

use crate::error::{Error, Result};
use crate::field::{SpectralField, VectorField};
use crate::transform::{sup_norm, to_physical};

/// `‖f‖_{H^s}² = Σ |k|^{2s} |f̂(k)|²`.
pub fn sobolev_norm_sq(f: &SpectralField, s: f64) -> f64 {
    let g = f.grid();
    let c = f.coeffs();
    g.active_indices().iter().map(|&i| g.ksq(i).powf(s) * c[i].norm_sqr()).sum()
}

pub fn sobolev_norm(f: &SpectralField, s: f64) -> f64 {
    sobolev_norm_sq(f, s).sqrt()
}

/// Componentwise `H^s` norm of a vector field.
pub fn vector_sobolev_norm(v: &VectorField, s: f64) -> f64 {
    (sobolev_norm_sq(&v.c1, s) + sobolev_norm_sq(&v.c2, s)).sqrt()
}

/// Largest Paley block index resolved by the grid.
pub fn max_block(f: &SpectralField) -> u32 {
    let g = f.grid();
    let half = g.dealias().as_f64() * g.n() as f64 / 2.0;
    half.log2().floor().max(0.0) as u32
}

/// Truncated `C^β` norm `max_j 2^{jβ} ‖Δ_j f‖_∞` with sharp dyadic blocks
/// `2^{j-1} < |k| ≤ 2^j`, `j = 0..=max_block`.
pub fn holder_norm(f: &SpectralField, beta: f64) -> f64 {
    let g = f.grid();
    let mut best: f64 = 0.0;
    for j in 0..=max_block(f) {
        let hi = (1u64 << j) as f64;
        let (lo2, hi2) = ((hi / 2.0).powi(2), hi * hi);
        if !g.active_indices().iter().any(|&i| g.ksq(i) > lo2 && g.ksq(i) <= hi2) {
            continue;
        }
        let block = f.map_ksq(|k2| if k2 > lo2 && k2 <= hi2 { 1.0 } else { 0.0 });
        if block.is_zero() {
            continue;
        }
        best = best.max(2f64.powf(j as f64 * beta) * sup_norm(&to_physical(&block)));
    }
    best
}

/// `M^{(β)}(f) = min{M ≥ 1 : ‖ℋ_M f‖ ≤ β ‖ℒ_M f‖}`.
pub fn spectral_quantile(f: &SpectralField, beta: f64) -> Result<u64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("quantile level {beta} must be positive")));
    }
    if f.is_zero() {
        return Err(Error::ZeroField);
    }
    let g = f.grid();
    let max_ksq = g.max_ksq() as usize;
    let mut shell = vec![0.0; max_ksq + 1];
    for &i in g.active_indices() {
        shell[g.ksq(i) as usize] += f.coeffs()[i].norm_sqr();
    }
    let b2 = beta * beta;
    let mut low = 0.0;
    let mut next = 0usize;
    let mut m = 1u64;
    loop {
        let m2 = (m * m) as usize;
        while next <= m2.min(max_ksq) {
            low += shell[next];
            next += 1;
        }
        let high: f64 = if next > max_ksq { 0.0 } else { shell[next..].iter().sum() };
        if high <= b2 * low {
            return Ok(m);
        }
        m += 1;
    }
}

/// Spectral median `M(f) = M^{(1)}(f)`.
pub fn spectral_median(f: &SpectralField) -> Result<u64> {
    spectral_quantile(f, 1.0)
}

/// `ℓ(f) = ‖f‖ / ‖∇f‖`.
pub fn filament_scale(f: &SpectralField) -> Result<f64> {
    if f.is_zero() {
        return Err(Error::ZeroField);
    }
    Ok(sobolev_norm(f, 0.0) / sobolev_norm(f, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DealiasFraction, WaveGrid, Wavenumber};
    use crate::ops::{project_high, project_low};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid() -> Arc<WaveGrid> {
        WaveGrid::new(32, DealiasFraction::TWO_THIRDS).unwrap()
    }

    fn pair(k: (i64, i64), c: f64) -> (Wavenumber, Complex64) {
        (Wavenumber::new(k.0, k.1), Complex64::new(c, 0.0))
    }

    fn random(seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::random(&grid(), &mut rng, |k| 1.0 / (1.0 + k * k))
    }

    fn scan_quantile(f: &SpectralField, beta: f64) -> u64 {
        (1..=64u64)
            .find(|&m| project_high(f, m as f64).norm() <= beta * project_low(f, m as f64).norm())
            .unwrap()
    }

    #[test]
    fn sobolev_examples() {
        let f = SpectralField::from_modes(&grid(), &[pair((1, 0), 1.0)]).unwrap();
        for s in [-2.0, 0.0, 1.0, 3.5] {
            assert!((sobolev_norm(&f, s) - 2f64.sqrt()).abs() < 1e-15);
        }
        let f = SpectralField::from_modes(&grid(), &[pair((0, 2), 1.0)]).unwrap();
        assert!((sobolev_norm(&f, 1.5) - 2f64.sqrt() * 2f64.powf(1.5)).abs() < 1e-13);
        assert_eq!(sobolev_norm(&SpectralField::zeros(&grid()), 1.0), 0.0);
    }

    #[test]
    fn holder_examples() {
        let f = SpectralField::from_modes(&grid(), &[pair((1, 0), 1.0)]).unwrap();
        assert!((holder_norm(&f, 3.0) - 2.0).abs() < 1e-14);
        assert_eq!(holder_norm(&SpectralField::zeros(&grid()), 1.0), 0.0);
        // |k| = 3 sits in block j = 2
        let f = SpectralField::from_modes(&grid(), &[pair((3, 0), 1.0)]).unwrap();
        assert!((holder_norm(&f, 1.0) - 8.0).abs() < 1e-13);
        assert_eq!(max_block(&f), 3);
    }

    #[test]
    fn quantile_examples() {
        let f = SpectralField::from_modes(&grid(), &[pair((3, 4), 1.0)]).unwrap();
        for beta in [0.1, 1.0, 2.0, 10.0] {
            assert_eq!(spectral_quantile(&f, beta).unwrap(), 5);
        }
        let f = SpectralField::from_modes(&grid(), &[pair((1, 0), 1.0), pair((0, 3), 1.0)]).unwrap();
        assert_eq!(spectral_median(&f).unwrap(), 1);
        assert_eq!(spectral_quantile(&SpectralField::zeros(&grid()), 1.0), Err(Error::ZeroField));
    }

    #[test]
    fn filament_examples() {
        let f = SpectralField::from_modes(&grid(), &[pair((0, 7), 1.0)]).unwrap();
        assert!((filament_scale(&f).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        let f = SpectralField::from_modes(&grid(), &[pair((1, 0), 1.0), pair((0, 2), 1.0)]).unwrap();
        assert!((filament_scale(&f).unwrap() - (2.0f64 / 5.0).sqrt()).abs() < 1e-15);
        assert_eq!(filament_scale(&SpectralField::zeros(&grid())), Err(Error::ZeroField));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn quantile_matches_linear_scan(seed in any::<u64>(), beta in 0.05f64..5.0) {
            let f = random(seed);
            prop_assert_eq!(spectral_quantile(&f, beta).unwrap(), scan_quantile(&f, beta));
        }

        #[test]
        fn quantile_monotone_in_beta(seed in any::<u64>(), b1 in 0.05f64..5.0, b2 in 0.05f64..5.0) {
            let f = random(seed);
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(spectral_quantile(&f, lo).unwrap() >= spectral_quantile(&f, hi).unwrap());
        }

        #[test]
        fn scale_invariance(seed in any::<u64>(), c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]) {
            let f = random(seed);
            let g = f.scaled(c);
            prop_assert_eq!(spectral_median(&f).unwrap(), spectral_median(&g).unwrap());
            prop_assert!((filament_scale(&f).unwrap() - filament_scale(&g).unwrap()).abs() < 1e-12);
            let h = holder_norm(&f, 1.5);
            prop_assert!((holder_norm(&g, 1.5) - c.abs() * h).abs() < 1e-10 * c.abs() * h);
        }
    }
}
