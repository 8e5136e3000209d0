//! Initial data for the scalar and the flow.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::{WaveGrid, Wavenumber};

/// Unit-amplitude cosine `2 cos(m x₁)`, the pair at `(m, 0)`.
pub fn single_mode(grid: &Arc<WaveGrid>, m: i64) -> Result<SpectralField> {
    SpectralField::single_pair(grid, Wavenumber::new(m, 0), Complex64::new(1.0, 0.0))
}

/// Equal energy on every active mode with `m0 - 1 < |k| ≤ m0`, random phases,
/// unit norm. Its spectral median is exactly `m0`.
pub fn annulus<R: Rng + ?Sized>(grid: &Arc<WaveGrid>, m0: u64, rng: &mut R) -> Result<SpectralField> {
    if m0 == 0 {
        return Err(Error::InvalidParameter("annulus radius must be positive".into()));
    }
    if m0 as i64 > grid.cutoff() {
        return Err(Error::Resolution { m0, limit: grid.cutoff() as u64 });
    }
    let (lo, hi) = (((m0 - 1) * (m0 - 1)) as f64, (m0 * m0) as f64);
    let mut f = SpectralField::zeros(grid);
    for &idx in grid.pair_representatives() {
        let k2 = grid.ksq(idx);
        let phase: f64 = rng.random::<f64>() * 2.0 * PI;
        if k2 > lo && k2 <= hi {
            f.set_index_pair(idx, Complex64::from_polar(1.0, phase));
        }
    }
    let norm = f.norm();
    Ok(f.scaled(1.0 / norm))
}

/// Random field with `E|f̂(k)|² ∝ |k|^{-2s}`, normalised to unit norm.
pub fn power_law<R: Rng + ?Sized>(grid: &Arc<WaveGrid>, s: f64, rng: &mut R) -> SpectralField {
    let f = SpectralField::random(grid, rng, |k| k.powf(-s));
    let norm = f.norm();
    f.scaled(1.0 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DealiasFraction;
    use crate::norms::{spectral_median, spectral_quantile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn annulus_median_is_the_radius() {
        let g = WaveGrid::new(64, DealiasFraction::TWO_THIRDS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m0 in [1, 2, 5, 8, 16] {
            let f = annulus(&g, m0, &mut rng).unwrap();
            assert!((f.norm() - 1.0).abs() < 1e-14);
            assert_eq!(spectral_median(&f).unwrap(), m0);
            assert_eq!(spectral_quantile(&f, 2.0).unwrap(), m0);
            assert!(f.hermitian_defect() == 0.0);
        }
        assert_eq!(annulus(&g, 30, &mut rng).unwrap_err(), Error::Resolution { m0: 30, limit: 21 });
    }

    #[test]
    fn lower_shell_with_more_energy_moves_the_median() {
        let g = WaveGrid::new(64, DealiasFraction::TWO_THIRDS).unwrap();
        let f = SpectralField::from_modes(
            &g,
            &[(Wavenumber::new(10, 0), Complex64::new(0.5, 0.0)), (Wavenumber::new(8, 0), Complex64::new(1.0, 0.0))],
        )
        .unwrap();
        assert_eq!(spectral_median(&f).unwrap(), 8);
    }
}
