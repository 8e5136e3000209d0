//! Spectral ↔ physical transforms and the dealiased pseudo-spectral product.
//!
//! Physical samples sit at `x_j = 2π j / n`, row-major in `(j1, j2)`. Two real
//! fields are always transformed together through one complex FFT.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{check_grids, SpectralField, VectorField};
use crate::grid::WaveGrid;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn to_physical(f: &SpectralField) -> Vec<f64> {
    let grid = f.grid();
    let mut z: Vec<Complex64> = f.coeffs().to_vec();
    grid.fft2(&mut z, true);
    z.into_iter().map(|c| c.re).collect()
}

/// Physical samples of two fields on the same grid.
pub fn to_physical_pair(f: &SpectralField, g: &SpectralField) -> Result<(Vec<f64>, Vec<f64>)> {
    check_grids(f, g)?;
    let (a, b) = (f.coeffs(), g.coeffs());
    let z = packed_samples(f.grid(), |i| a[i] + Complex64::i() * b[i]);
    Ok(z.into_iter().map(|c| (c.re, c.im)).unzip())
}

/// Inverse transform of the active-set coefficients `coeff(i)`. Packing
/// `â + i b̂` returns the samples of `a` and `b` as real and imaginary parts.
pub(crate) fn packed_samples(grid: &Arc<WaveGrid>, coeff: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
    let mut z = vec![ZERO; grid.len()];
    for &i in grid.active_indices() {
        z[i] = coeff(i);
    }
    grid.fft2(&mut z, true);
    z
}

/// Projects the real parts of `z` onto the active set, reusing `z` as the
/// transform buffer.
pub(crate) fn project_real(grid: &Arc<WaveGrid>, mut z: Vec<Complex64>) -> SpectralField {
    for c in z.iter_mut() {
        c.im = 0.0;
    }
    grid.fft2(&mut z, false);
    let scale = 0.5 / grid.len() as f64;
    let mut out = vec![ZERO; grid.len()];
    for &i in grid.active_indices() {
        out[i] = (z[i] + z[grid.conj_index(i)].conj()) * scale;
    }
    SpectralField::from_raw(grid, out)
}

/// Projects real samples onto the active set: the mean is removed and
/// dealiased modes are zeroed.
pub fn from_physical(grid: &Arc<WaveGrid>, data: &[f64]) -> Result<SpectralField> {
    check_len(grid, data)?;
    Ok(project_real(grid, data.iter().map(|&x| Complex64::new(x, 0.0)).collect()))
}

pub fn from_physical_pair(grid: &Arc<WaveGrid>, a: &[f64], b: &[f64]) -> Result<(SpectralField, SpectralField)> {
    check_len(grid, a)?;
    check_len(grid, b)?;
    let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    grid.fft2(&mut z, false);
    Ok(unpack(grid, &z))
}

fn check_len(grid: &WaveGrid, data: &[f64]) -> Result<()> {
    if data.len() != grid.len() {
        return Err(Error::DimensionMismatch { got: data.len(), expected: grid.len() });
    }
    Ok(())
}

// Splits the transform of `a + i b` into the transforms of `a` and `b`. The
// symmetrised formulas make both outputs exactly Hermitian.
fn unpack(grid: &Arc<WaveGrid>, z: &[Complex64]) -> (SpectralField, SpectralField) {
    let scale = 1.0 / grid.len() as f64;
    let mut fa = vec![ZERO; grid.len()];
    let mut fb = vec![ZERO; grid.len()];
    let half_i = Complex64::new(0.0, -0.5);
    for &i in grid.active_indices() {
        let zk = z[i];
        let zm = z[grid.conj_index(i)].conj();
        fa[i] = (zk + zm) * (0.5 * scale);
        fb[i] = (zk - zm) * half_i * scale;
    }
    (SpectralField::from_raw(grid, fa), SpectralField::from_raw(grid, fb))
}

/// Pointwise product in physical space followed by projection on the active
/// set. With 2/3 dealiasing this equals the truncated convolution
/// `Σ_{j+k=ℓ} f̂(k) ĝ(j)` exactly.
pub fn dealiased_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    let (a, b) = to_physical_pair(f, g)?;
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    from_physical(f.grid(), &prod)
}

/// Physical samples of both velocity components.
pub fn vector_to_physical(v: &VectorField) -> (Vec<f64>, Vec<f64>) {
    to_physical_pair(&v.c1, &v.c2).expect("vector components share a grid")
}

/// Maximum absolute sample value.
pub fn sup_norm(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Largest pointwise speed `|u(x_j)|`.
pub fn max_speed(u1: &[f64], u2: &[f64]) -> f64 {
    u1.iter().zip(u2).fold(0.0_f64, |m, (a, b)| m.max((a * a + b * b).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DealiasFraction, Wavenumber};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    // Truncated convolution by direct double sum.
    fn brute_convolution(f: &SpectralField, g: &SpectralField) -> SpectralField {
        let grid = f.grid();
        let mut out = SpectralField::zeros(grid);
        let modes_f: Vec<_> = f.modes().collect();
        let modes_g: Vec<_> = g.modes().collect();
        let mut acc = vec![ZERO; grid.len()];
        for &(k, a) in &modes_f {
            for &(j, b) in &modes_g {
                let l = k + j;
                if grid.is_active(l) {
                    acc[grid.index_of(l).unwrap()] += a * b;
                }
            }
        }
        out.coeffs_mut().copy_from_slice(&acc);
        out
    }

    #[test]
    fn cosine_samples() {
        let g = WaveGrid::new(8, DealiasFraction::NONE).unwrap();
        let f = SpectralField::single_pair(&g, Wavenumber::new(1, 0), c(1.0)).unwrap();
        let x = to_physical(&f);
        for j1 in 0..8 {
            for j2 in 0..8 {
                let expect = 2.0 * g.coordinate(j1).cos();
                assert!((x[j1 * 8 + j2] - expect).abs() < 1e-14);
            }
        }
        let zero = to_physical(&SpectralField::zeros(&g));
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_physical_removes_mean_and_checks_size() {
        let g = WaveGrid::new(12, DealiasFraction::TWO_THIRDS).unwrap();
        let data = vec![3.5; 144];
        assert!(from_physical(&g, &data).unwrap().norm() < 1e-14);
        assert_eq!(
            from_physical(&g, &[0.0; 10]).unwrap_err(),
            Error::DimensionMismatch { got: 10, expected: 144 }
        );
    }

    #[test]
    fn parseval_with_mean_square() {
        let g = WaveGrid::new(16, DealiasFraction::TWO_THIRDS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = SpectralField::random(&g, &mut rng, |k| 1.0 / (1.0 + k));
        let x = to_physical(&f);
        let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((ms - f.norm_sq()).abs() < 1e-12 * f.norm_sq());
    }

    #[test]
    fn product_of_orthogonal_cosines() {
        let g = WaveGrid::new(16, DealiasFraction::TWO_THIRDS).unwrap();
        let f = SpectralField::single_pair(&g, Wavenumber::new(1, 0), c(1.0)).unwrap();
        let h = SpectralField::single_pair(&g, Wavenumber::new(0, 1), c(1.0)).unwrap();
        let p = dealiased_product(&f, &h).unwrap();
        for (k, v) in p.modes() {
            let expect = if k.k1.abs() == 1 && k.k2.abs() == 1 { 1.0 } else { 0.0 };
            assert!((v - c(expect)).norm() < 1e-14, "{k}: {v}");
        }
    }

    #[test]
    fn square_of_cosine_drops_mean() {
        let g = WaveGrid::new(16, DealiasFraction::TWO_THIRDS).unwrap();
        let f = SpectralField::single_pair(&g, Wavenumber::new(1, 0), c(1.0)).unwrap();
        let p = dealiased_product(&f, &f).unwrap();
        assert!((p.coefficient(Wavenumber::new(2, 0)) - c(1.0)).norm() < 1e-14);
        assert!((p.norm_sq() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn product_matches_brute_force_convolution() {
        let g = WaveGrid::new(16, DealiasFraction::TWO_THIRDS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f = SpectralField::random(&g, &mut rng, |_| 1.0);
            let h = SpectralField::random(&g, &mut rng, |_| 1.0);
            let fast = dealiased_product(&f, &h).unwrap();
            let slow = brute_convolution(&f, &h);
            let err = (&fast - &slow).norm() / slow.norm();
            assert!(err < 1e-10, "relative error {err}");
        }
    }

    #[test]
    fn product_rejects_mismatched_grids() {
        let a = WaveGrid::new(16, DealiasFraction::TWO_THIRDS).unwrap();
        let b = WaveGrid::new(32, DealiasFraction::TWO_THIRDS).unwrap();
        let e = dealiased_product(&SpectralField::zeros(&a), &SpectralField::zeros(&b));
        assert_eq!(e.unwrap_err(), Error::GridMismatch);
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(seed in any::<u64>(), n in prop::sample::select(vec![8usize, 12, 16, 24])) {
            let g = WaveGrid::new(n, DealiasFraction::TWO_THIRDS).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = SpectralField::random(&g, &mut rng, |_| 1.0);
            let back = from_physical(&g, &to_physical(&f)).unwrap();
            prop_assert!((&back - &f).norm() <= 1e-12 * f.norm());
        }
    }
}
