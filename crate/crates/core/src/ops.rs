//! Fourier-multiplier operators on mean-zero fields.
//!
//! Odd-order multipliers vanish on Nyquist components (only present on
//! undealiased grids), so outputs stay real.

use num_complex::Complex64;

use crate::field::{SpectralField, VectorField};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `∇f`, multiplier `ιk`.
pub fn grad(f: &SpectralField) -> VectorField {
    let g = f.grid();
    let c1 = f.map(|i, c| I * g.kderiv(i)[0] * c);
    let c2 = f.map(|i, c| I * g.kderiv(i)[1] * c);
    VectorField::new(c1, c2).expect("same grid")
}

/// `div v`, multiplier `ιk·`.
pub fn div(v: &VectorField) -> SpectralField {
    let g = v.grid();
    let b = v.c2.coeffs();
    v.c1.map(|i, a| {
        let k = g.kderiv(i);
        I * (a * k[0] + b[i] * k[1])
    })
}

/// `Δf`, multiplier `-|k|²`.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    f.map_ksq(|k2| -k2)
}

/// `Δ⁻¹f`, multiplier `-1/|k|²`.
pub fn inv_laplacian(f: &SpectralField) -> SpectralField {
    f.map_ksq(|k2| -1.0 / k2)
}

/// `∇(-Δ)⁻¹ f`, multiplier `ιk/|k|²`. Note `div ∘ inv_grad = -id`.
pub fn inv_grad(f: &SpectralField) -> VectorField {
    let g = f.grid();
    let c1 = f.map(|i, c| I * (g.kderiv(i)[0] / g.ksq(i)) * c);
    let c2 = f.map(|i, c| I * (g.kderiv(i)[1] / g.ksq(i)) * c);
    VectorField::new(c1, c2).expect("same grid")
}

/// Componentwise Laplacian of a vector field.
pub fn vector_laplacian(v: &VectorField) -> VectorField {
    v.map_ksq(|k2| -k2)
}

/// Leray projection, multiplier `I - k kᵀ/|k|²`.
pub fn leray_project(v: &VectorField) -> VectorField {
    let g = v.grid();
    let (a, b) = (v.c1.coeffs(), v.c2.coeffs());
    let proj = |i: usize| {
        let k = g.kderiv(i);
        let kk = k[0] * k[0] + k[1] * k[1];
        if kk == 0.0 {
            return (a[i], b[i]);
        }
        let dot = (a[i] * k[0] + b[i] * k[1]) / kk;
        (a[i] - dot * k[0], b[i] - dot * k[1])
    };
    let c1 = v.c1.map(|i, _| proj(i).0);
    let c2 = v.c2.map(|i, _| proj(i).1);
    VectorField::solenoidal(c1, c2)
}

/// Velocity from vorticity, `û = ι k^⊥ ŵ / |k|²` with `k^⊥ = (k2, -k1)`.
pub fn biot_savart(w: &SpectralField) -> VectorField {
    let g = w.grid();
    let c1 = w.map(|i, c| I * (g.kderiv(i)[1] / g.ksq(i)) * c);
    let c2 = w.map(|i, c| I * (-g.kderiv(i)[0] / g.ksq(i)) * c);
    VectorField::solenoidal(c1, c2)
}

/// Scalar vorticity `∂₁v₂ - ∂₂v₁`.
pub fn curl(v: &VectorField) -> SpectralField {
    let g = v.grid();
    let a = v.c1.coeffs();
    v.c2.map(|i, b| {
        let k = g.kderiv(i);
        I * (b * k[0] - a[i] * k[1])
    })
}

/// `ℒ_M f`: keeps modes with `|k| ≤ m`.
pub fn project_low(f: &SpectralField, m: f64) -> SpectralField {
    let m2 = m * m;
    f.map_ksq(|k2| if k2 <= m2 { 1.0 } else { 0.0 })
}

/// `ℋ_M f`: keeps modes with `|k| > m`.
pub fn project_high(f: &SpectralField, m: f64) -> SpectralField {
    let m2 = m * m;
    f.map_ksq(|k2| if k2 > m2 { 1.0 } else { 0.0 })
}

pub fn project_low_vector(v: &VectorField, m: f64) -> VectorField {
    let m2 = m * m;
    v.map_ksq(move |k2| if k2 <= m2 { 1.0 } else { 0.0 })
}

/// Heat semigroup `exp(ν t Δ)`.
pub trait HeatPropagate: Sized {
    fn heat_propagate(&self, t: f64, nu: f64) -> Self;
}

impl HeatPropagate for SpectralField {
    fn heat_propagate(&self, t: f64, nu: f64) -> Self {
        self.map_ksq(|k2| (-nu * k2 * t).exp())
    }
}

impl HeatPropagate for VectorField {
    fn heat_propagate(&self, t: f64, nu: f64) -> Self {
        self.map_ksq(|k2| (-nu * k2 * t).exp())
    }
}

pub fn heat_propagate<T: HeatPropagate>(f: &T, t: f64, nu: f64) -> T {
    f.heat_propagate(t, nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DealiasFraction, WaveGrid, Wavenumber};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid() -> Arc<WaveGrid> {
        WaveGrid::new(24, DealiasFraction::TWO_THIRDS).unwrap()
    }

    fn random(seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::random(&grid(), &mut rng, |k| 1.0 / (1.0 + k))
    }

    fn random_vector(seed: u64) -> VectorField {
        VectorField::new(random(seed), random(seed.wrapping_add(1))).unwrap()
    }

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn laplacian_of_single_pair() {
        let f = SpectralField::single_pair(&grid(), Wavenumber::new(1, 2), re(1.0)).unwrap();
        assert_eq!(laplacian(&f).coefficient(Wavenumber::new(1, 2)), re(-5.0));
    }

    #[test]
    fn inv_grad_of_single_pair() {
        let k = Wavenumber::new(2, 0);
        let f = SpectralField::single_pair(&grid(), k, re(1.0)).unwrap();
        let v = inv_grad(&f);
        assert!((v.c1.coefficient(k) - I * 0.5).norm() < 1e-15);
        assert_eq!(v.c2.coefficient(k), re(0.0));
    }

    #[test]
    fn biot_savart_of_unit_shear() {
        let k = Wavenumber::new(1, 0);
        let w = SpectralField::single_pair(&grid(), k, re(1.0)).unwrap();
        let u = biot_savart(&w);
        assert_eq!(u.c1.coefficient(k), re(0.0));
        assert!((u.c2.coefficient(k) + I).norm() < 1e-15);
        assert!(u.is_divergence_free());
    }

    #[test]
    fn projector_fixes_solenoidal_fields() {
        let u = biot_savart(&random(9));
        let p = leray_project(&u);
        assert!((p.c1.coeffs().iter().zip(u.c1.coeffs()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)) < 1e-15);
    }

    #[test]
    fn projections_split_at_the_boundary() {
        let f = SpectralField::single_pair(&grid(), Wavenumber::new(3, 4), re(1.0)).unwrap();
        assert_eq!(project_low(&f, 5.0).norm_sq(), f.norm_sq());
        assert!(project_high(&f, 5.0).is_zero());
        assert!(project_low(&f, 4.9).is_zero());
    }

    #[test]
    fn heat_factor() {
        let f = SpectralField::single_pair(&grid(), Wavenumber::new(1, 0), re(1.0)).unwrap();
        let g = f.heat_propagate(1.0, 1.0);
        assert!((g.coefficient(Wavenumber::new(1, 0)).re - (-1.0f64).exp()).abs() < 1e-16);
        assert_eq!(f.heat_propagate(0.0, 3.0).coeffs(), f.coeffs());
    }

    fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn multiplier_identities(seed in any::<u64>()) {
            let f = random(seed);
            prop_assert!(max_diff(&div(&grad(&f)), &laplacian(&f)) < 1e-12);
            prop_assert!(max_diff(&div(&inv_grad(&f)), &(-&f)) < 1e-12);
            prop_assert!(max_diff(&laplacian(&inv_laplacian(&f)), &f) < 1e-12);
            prop_assert!(max_diff(&curl(&biot_savart(&f)), &f) < 1e-12);
            prop_assert!(biot_savart(&f).divergence_defect() < 1e-12);
        }

        #[test]
        fn leray_is_an_orthogonal_projector(seed in any::<u64>()) {
            let v = random_vector(seed);
            let p = leray_project(&v);
            let pp = leray_project(&p);
            prop_assert!(p.divergence_defect() < 1e-12);
            prop_assert!((pp.c1.norm_sq() + pp.c2.norm_sq() - p.norm_sq()).abs() < 1e-12 * p.norm_sq());
            // v - Pv is orthogonal to Pv
            let mut rest = v.clone();
            rest.axpy(-1.0, &p);
            prop_assert!(rest.inner(&p).abs() < 1e-12 * v.norm_sq());
        }

        #[test]
        fn low_high_pythagoras(seed in any::<u64>(), m in 0.5f64..12.0) {
            let f = random(seed);
            let lo = project_low(&f, m);
            let hi = project_high(&f, m);
            prop_assert!((lo.norm_sq() + hi.norm_sq() - f.norm_sq()).abs() < 1e-12 * f.norm_sq());
            prop_assert!(max_diff(&(&lo + &hi), &f) < 1e-15);
        }

        #[test]
        fn heat_semigroup(seed in any::<u64>(), s in 0.0f64..0.5, t in 0.0f64..0.5) {
            let f = random(seed);
            let a = f.heat_propagate(s, 1.0).heat_propagate(t, 1.0);
            let b = f.heat_propagate(s + t, 1.0);
            prop_assert!(max_diff(&a, &b) < 1e-14);
        }
    }
}
