//! The scalar equation `∂t ϱ + L[u]ϱ - κΔϱ = 0` in projective form, with the
//! operators `L[u]`, `R[u]` and the bilinear map `Φ`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_grids, SpectralField, VectorField};
use crate::flow::{quadrature_nodes, Trajectory};
use crate::grid::Wavenumber;
use crate::ops::{inv_grad, inv_laplacian, vector_laplacian, HeatPropagate};
use crate::transform::{packed_samples, project_real, from_physical, from_physical_pair, max_speed, to_physical, to_physical_pair, vector_to_physical};

/// Largest grid accepted by [`apply_l_direct`].
pub const DIRECT_MAX_N: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    /// Passive advection `u·∇ϱ`.
    Adv,
    /// Linearised Navier-Stokes `u·∇ϱ + Δu·∇⁻¹ϱ`.
    Lns,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adv => "adv",
            Self::Lns => "lns",
        })
    }
}

impl FromStr for OperatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adv" => Ok(Self::Adv),
            "lns" => Ok(Self::Lns),
            other => Err(Error::InvalidParameter(format!("unknown operator '{other}', expected adv or lns"))),
        }
    }
}

/// Time integrator for the scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarScheme {
    /// Exponential (integrating-factor) Euler.
    #[default]
    Euler,
    /// Three-stage strong-stability-preserving Runge-Kutta on the
    /// integrating-factor form, velocity frozen over the step.
    Rk3,
}

impl FromStr for ScalarScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Self::Euler),
            "rk3" => Ok(Self::Rk3),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}', expected euler or rk3"))),
        }
    }
}

/// Velocity with its physical samples cached, ready for repeated
/// applications of `L[u]`.
#[derive(Clone, Debug)]
pub struct PreparedVelocity {
    u: VectorField,
    kind: OperatorKind,
    phys: Option<(Vec<f64>, Vec<f64>)>,
    lap: Option<(Vec<f64>, Vec<f64>)>,
    max_speed: f64,
}

impl PreparedVelocity {
    pub fn new(u: &VectorField, kind: OperatorKind) -> Self {
        if u.c1.is_zero() && u.c2.is_zero() {
            return Self { u: u.clone(), kind, phys: None, lap: None, max_speed: 0.0 };
        }
        let phys = vector_to_physical(u);
        let speed = max_speed(&phys.0, &phys.1);
        let lap = match kind {
            OperatorKind::Adv => None,
            OperatorKind::Lns => Some(vector_to_physical(&vector_laplacian(u))),
        };
        Self { u: u.clone(), kind, phys: Some(phys), lap, max_speed: speed }
    }

    pub fn velocity(&self) -> &VectorField {
        &self.u
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    /// `max|Δu|`, zero for the advection operator.
    pub fn max_laplacian(&self) -> f64 {
        match &self.lap {
            Some((a, b)) => max_speed(a, b),
            None => {
                let (a, b) = vector_to_physical(&vector_laplacian(&self.u));
                max_speed(&a, &b)
            }
        }
    }

    /// `L[u]ρ`.
    pub fn apply(&self, rho: &SpectralField) -> Result<SpectralField> {
        check_grids(&self.u.c1, rho)?;
        let Some((u1, u2)) = &self.phys else {
            return Ok(SpectralField::zeros(rho.grid()));
        };
        let g = rho.grid();
        let c = rho.coeffs();
        // ∂₁ρ + i∂₂ρ in one transform.
        let mut z = packed_samples(g, |i| {
            let k = g.kderiv(i);
            Complex64::new(-k[1], k[0]) * c[i]
        });
        if let Some((l1, l2)) = &self.lap {
            // ∇(-Δ)⁻¹ρ has the same symbol divided by |k|².
            let v = packed_samples(g, |i| {
                let k = g.kderiv(i);
                Complex64::new(-k[1], k[0]) * (c[i] / g.ksq(i))
            });
            for (j, zj) in z.iter_mut().enumerate() {
                zj.re = u1[j] * zj.re + u2[j] * zj.im + l1[j] * v[j].re + l2[j] * v[j].im;
            }
        } else {
            for (j, zj) in z.iter_mut().enumerate() {
                zj.re = u1[j] * zj.re + u2[j] * zj.im;
            }
        }
        Ok(project_real(g, z))
    }

    /// The stretching term `Δu·∇⁻¹ρ` alone (zero for advection).
    pub fn stretching(&self, rho: &SpectralField) -> Result<SpectralField> {
        check_grids(&self.u.c1, rho)?;
        let Some((l1, l2)) = &self.lap else {
            return Ok(SpectralField::zeros(rho.grid()));
        };
        let v = inv_grad(rho);
        let (v1, v2) = to_physical_pair(&v.c1, &v.c2)?;
        let prod: Vec<f64> = (0..l1.len()).map(|i| l1[i] * v1[i] + l2[i] * v2[i]).collect();
        from_physical(rho.grid(), &prod)
    }
}

/// `L[u]ρ`: `u·∇ρ` for advection, `u·∇ρ + Δu·∇(-Δ)⁻¹ρ` for LNS.
pub fn apply_l(u: &VectorField, rho: &SpectralField, kind: OperatorKind) -> Result<SpectralField> {
    check_grids(&u.c1, rho)?;
    PreparedVelocity::new(u, kind).apply(rho)
}

/// `c_{k,j} = ⟨k^⊥, j⟩ (|k|⁻² - |j|⁻²)`.
pub fn lns_multiplier(k: Wavenumber, j: Wavenumber) -> f64 {
    let a = k.perp().dot(j) as f64;
    a * (1.0 / k.norm_sq() as f64 - 1.0 / j.norm_sq() as f64)
}

/// LNS operator from the vorticity by direct double summation,
/// `(L[u]ρ)^(ℓ) = -Σ_{k+j=ℓ} c_{k,j} ŵ(k) ρ̂(j)`.
pub fn apply_l_direct(w: &SpectralField, rho: &SpectralField) -> Result<SpectralField> {
    check_grids(w, rho)?;
    let g = w.grid();
    if g.n() > DIRECT_MAX_N {
        return Err(Error::TooLarge { n: g.n(), max: DIRECT_MAX_N });
    }
    let wm: Vec<(Wavenumber, Complex64)> = w.modes().filter(|(_, c)| c.norm_sqr() > 0.0).collect();
    let rm: Vec<(Wavenumber, Complex64)> = rho.modes().filter(|(_, c)| c.norm_sqr() > 0.0).collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
    for &(k, a) in &wm {
        for &(j, b) in &rm {
            let l = k + j;
            if g.is_active(l) {
                acc[g.index_of(l).expect("active")] -= a * b * lns_multiplier(k, j);
            }
        }
    }
    Ok(rho.map(|i, _| acc[i]))
}

/// `R[u]ρ = uρ + (Δu)(-Δ)⁻¹ρ`, so that `div R[u]ρ = L[u]ρ` for LNS.
pub fn r_operator(u: &VectorField, rho: &SpectralField) -> Result<VectorField> {
    check_grids(&u.c1, rho)?;
    let (u1, u2) = vector_to_physical(u);
    let (l1, l2) = vector_to_physical(&vector_laplacian(u));
    let (r, p) = to_physical_pair(rho, &inv_laplacian(rho).scaled(-1.0))?;
    let a: Vec<f64> = (0..r.len()).map(|i| u1[i] * r[i] + l1[i] * p[i]).collect();
    let b: Vec<f64> = (0..r.len()).map(|i| u2[i] * r[i] + l2[i] * p[i]).collect();
    let (c1, c2) = from_physical_pair(rho.grid(), &a, &b)?;
    VectorField::new(c1, c2)
}

/// Projective scalar: `ϱ = exp(log_amp) π` with `‖π‖ = 1`.
#[derive(Clone, Debug)]
pub struct ScalarState {
    pi: SpectralField,
    log_amp: f64,
    t: f64,
    kind: OperatorKind,
    kappa: f64,
}

impl ScalarState {
    pub fn new(rho0: &SpectralField, kind: OperatorKind, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!("diffusivity {kappa} must lie in (0, 1]")));
        }
        let norm = rho0.norm();
        if norm == 0.0 {
            return Err(Error::ZeroField);
        }
        Ok(Self { pi: rho0.scaled(1.0 / norm), log_amp: norm.ln(), t: 0.0, kind, kappa })
    }

    /// Rebuilds a state from checkpointed parts. `pi` is kept bit for bit and
    /// must already have unit norm.
    pub fn from_parts(pi: SpectralField, log_amp: f64, t: f64, kind: OperatorKind, kappa: f64) -> Result<Self> {
        let mut s = Self::new(&pi, kind, kappa)?;
        if (pi.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("checkpointed π has norm {}", pi.norm())));
        }
        if !log_amp.is_finite() {
            return Err(Error::NonFinite { t });
        }
        s.pi = pi;
        s.log_amp = log_amp;
        s.t = t;
        Ok(s)
    }

    pub fn pi(&self) -> &SpectralField {
        &self.pi
    }

    pub fn log_amp(&self) -> f64 {
        self.log_amp
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The unnormalised scalar `ϱ`.
    pub fn rho(&self) -> SpectralField {
        self.pi.scaled(self.log_amp.exp())
    }

    /// Largest step allowed by the CFL guard for this velocity.
    pub fn cfl_limit(&self, u: &PreparedVelocity, c_cfl: f64) -> f64 {
        if u.max_speed() == 0.0 {
            f64::INFINITY
        } else {
            c_cfl / (self.pi.grid().n() as f64 * u.max_speed())
        }
    }

    fn renormalized(&self, next: SpectralField, h: f64) -> Result<Self> {
        let t = self.t + h;
        if !next.is_finite() {
            return Err(Error::NonFinite { t });
        }
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NormCollapse { t });
        }
        Ok(Self { pi: next.scaled(1.0 / norm), log_amp: self.log_amp + norm.ln(), t, kind: self.kind, kappa: self.kappa })
    }
}

fn check_step(state: &ScalarState, u: &PreparedVelocity, h: f64, c_cfl: f64) -> Result<()> {
    if u.kind() != state.kind {
        return Err(Error::InvalidParameter("velocity prepared for a different operator".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {h} must be positive")));
    }
    let h_max = state.cfl_limit(u, c_cfl);
    if h > h_max {
        return Err(Error::Cfl { h, h_max });
    }
    Ok(())
}

/// Exponential Euler: `π̂ ← e^{-κ|k|²h}(π̂ - h L̂π)`, then renormalise.
pub fn scalar_step(state: &ScalarState, u: &PreparedVelocity, h: f64, c_cfl: f64) -> Result<ScalarState> {
    check_step(state, u, h, c_cfl)?;
    let kappa = state.kappa;
    let mut next = state.pi.clone();
    next.axpy(-h, &u.apply(&state.pi)?);
    state.renormalized(next.map_ksq(|k2| (-kappa * k2 * h).exp()), h)
}

/// Integrating-factor SSP-RK3 step with the velocity frozen over the step.
pub fn scalar_step_rk3(state: &ScalarState, u: &PreparedVelocity, h: f64, c_cfl: f64) -> Result<ScalarState> {
    check_step(state, u, h, c_cfl)?;
    let kappa = state.kappa;
    // Propagators over -h/2, h/2 and h.
    let g = state.pi.grid();
    let mut q = vec![[0.0; 3]; g.len()];
    for &i in g.active_indices() {
        let x = (-0.5 * kappa * g.ksq(i) * h).exp();
        q[i] = [1.0 / x, x, x * x];
    }
    let e = |f: &SpectralField, halves: i32| {
        let slot = match halves {
            -1 => 0,
            1 => 1,
            _ => 2,
        };
        f.map(|i, c| c * q[i][slot])
    };
    let euler = |f: &SpectralField| -> Result<SpectralField> {
        let mut out = f.clone();
        out.axpy(-h, &u.apply(f)?);
        Ok(out)
    };
    let v0 = &state.pi;
    let v1 = e(&euler(v0)?, 2);
    let mut v2 = e(v0, 1).scaled(0.75);
    v2.axpy(0.25, &e(&euler(&v1)?, -1));
    let mut v3 = e(v0, 2).scaled(1.0 / 3.0);
    v3.axpy(2.0 / 3.0, &e(&euler(&v2)?, 1));
    state.renormalized(v3, h)
}

pub fn advance_scalar(
    scheme: ScalarScheme,
    state: &ScalarState,
    u: &PreparedVelocity,
    h: f64,
    c_cfl: f64,
) -> Result<ScalarState> {
    match scheme {
        ScalarScheme::Euler => scalar_step(state, u, h, c_cfl),
        ScalarScheme::Rk3 => scalar_step_rk3(state, u, h, c_cfl),
    }
}

/// Instantaneous log-growth rate `⟨π, κΔπ - L[u]π⟩` of `‖ϱ‖`.
pub fn log_derivative(pi: &SpectralField, u: &PreparedVelocity, kappa: f64) -> Result<f64> {
    let heat = -kappa * crate::norms::sobolev_norm_sq(pi, 1.0);
    Ok(heat - pi.inner(&u.apply(pi)?))
}

/// `Φ[u, w]_t = -∫_0^t P^κ_{t-s} L[u_s] w_s ds` by the trapezoidal rule.
pub fn phi_bilinear(
    u: &Trajectory<VectorField>,
    w: &Trajectory<SpectralField>,
    kappa: f64,
    t: f64,
    kind: OperatorKind,
    quadrature_step: f64,
) -> Result<SpectralField> {
    let nodes = quadrature_nodes(t, quadrature_step)?;
    let mut acc = PhiAccumulator::new(w.at(0.0)?.grid(), kappa);
    for &s in &nodes {
        let integrand = apply_l(u.at(s)?, w.at(s)?, kind)?;
        acc.push(&integrand, s)?;
    }
    Ok(acc.value())
}

/// Streaming trapezoidal evaluation of `-∫_0^t P^κ_{t-s} g_s ds` for samples
/// `g_s` supplied in time order.
#[derive(Clone, Debug)]
pub struct PhiAccumulator {
    acc: SpectralField,
    last: Option<(f64, SpectralField)>,
    kappa: f64,
}

impl PhiAccumulator {
    pub fn new(grid: &std::sync::Arc<crate::grid::WaveGrid>, kappa: f64) -> Self {
        Self { acc: SpectralField::zeros(grid), last: None, kappa }
    }

    pub fn push(&mut self, g: &SpectralField, s: f64) -> Result<()> {
        if let Some((t0, prev)) = &self.last {
            let d = s - t0;
            if !(d > 0.0) {
                return Err(Error::Coverage(format!("sample at {s} does not advance past {t0}")));
            }
            let kappa = self.kappa;
            let decay = |f: &SpectralField| f.map_ksq(|k2| (-kappa * k2 * d).exp());
            let mut next = decay(&self.acc);
            next.axpy(0.5 * d, &decay(prev));
            next.axpy(0.5 * d, g);
            self.acc = next;
        }
        self.last = Some((s, g.clone()));
        Ok(())
    }

    /// Current value `Φ_t` at the time of the last sample.
    pub fn value(&self) -> SpectralField {
        self.acc.scaled(-1.0)
    }
}

/// Heat flow `Y_t = P^κ_t ϱ₀`.
pub fn heat_flow(rho0: &SpectralField, kappa: f64, t: f64) -> SpectralField {
    rho0.heat_propagate(t, kappa)
}

/// Physical samples of `ϱ`, handy for snapshots.
pub fn scalar_samples(state: &ScalarState) -> Vec<f64> {
    to_physical(&state.rho())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DealiasFraction, WaveGrid};
    use crate::ops::{biot_savart, div};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn grid(n: usize) -> Arc<WaveGrid> {
        WaveGrid::new(n, DealiasFraction::TWO_THIRDS).unwrap()
    }

    fn random(g: &Arc<WaveGrid>, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::random(g, &mut rng, |k| 1.0 / (1.0 + k))
    }

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn multiplier_examples() {
        assert_eq!(lns_multiplier(Wavenumber::new(1, 0), Wavenumber::new(0, 1)), 0.0);
        assert_eq!(lns_multiplier(Wavenumber::new(1, 0), Wavenumber::new(1, 1)), -0.5);
    }

    #[test]
    fn equal_magnitudes_cancel() {
        let g = grid(16);
        let w = SpectralField::single_pair(&g, Wavenumber::new(1, 2), re(1.0)).unwrap();
        let rho = SpectralField::single_pair(&g, Wavenumber::new(2, -1), re(1.0)).unwrap();
        let out = apply_l(&biot_savart(&w), &rho, OperatorKind::Lns).unwrap();
        assert!(out.coefficient(Wavenumber::new(3, 1)).norm() < 1e-14);
    }

    #[test]
    fn direct_summation_guard() {
        let g = grid(64);
        let f = SpectralField::zeros(&g);
        assert_eq!(apply_l_direct(&f, &f).unwrap_err(), Error::TooLarge { n: 64, max: 32 });
    }

    #[test]
    fn pure_heat_on_an_eigenmode() {
        let g = grid(16);
        let rho = SpectralField::single_pair(&g, Wavenumber::new(3, 0), re(2.0)).unwrap();
        let mut s = ScalarState::new(&rho, OperatorKind::Adv, 0.1).unwrap();
        let u = PreparedVelocity::new(&VectorField::zeros(&g), OperatorKind::Adv);
        let a0 = s.log_amp();
        for _ in 0..10 {
            s = scalar_step(&s, &u, 0.01, 0.5).unwrap();
            assert!((s.pi().norm() - 1.0).abs() < 1e-14);
        }
        assert!((s.log_amp() - a0 + 0.1 * 9.0 * 0.1).abs() < 1e-12);
        assert!((s.pi() - &rho.scaled(1.0 / rho.norm())).norm() < 1e-14);
    }

    #[test]
    fn collapse_and_zero_are_errors() {
        let g = grid(16);
        assert_eq!(ScalarState::new(&SpectralField::zeros(&g), OperatorKind::Adv, 0.1).unwrap_err(), Error::ZeroField);
        assert!(ScalarState::new(&random(&g, 1), OperatorKind::Adv, 0.0).is_err());
    }

    #[test]
    fn r_operator_single_mode_multiplier() {
        let g = grid(16);
        let k = Wavenumber::new(1, 0);
        let j = Wavenumber::new(1, 1);
        let w = SpectralField::single_pair(&g, k, re(1.0)).unwrap();
        let rho = SpectralField::single_pair(&g, j, re(1.0)).unwrap();
        let r = r_operator(&biot_savart(&w), &rho).unwrap();
        // R̂(ℓ) = ι k^⊥ (|k|⁻² - |j|⁻²) ŵ(k) ρ̂(j) at ℓ = k + j
        let l = k + j;
        let f = 1.0 - 0.5;
        let expect = [Complex64::new(0.0, k.perp().k1 as f64 * f), Complex64::new(0.0, k.perp().k2 as f64 * f)];
        assert!((r.c1.coefficient(l) - expect[0]).norm() < 1e-14);
        assert!((r.c2.coefficient(l) - expect[1]).norm() < 1e-14);
        assert!(r_operator(&VectorField::zeros(&g), &rho).unwrap().norm() == 0.0);
    }

    #[test]
    fn rk3_agrees_with_euler_at_small_steps() {
        let g = grid(16);
        let u = biot_savart(&random(&g, 5));
        let p = PreparedVelocity::new(&u, OperatorKind::Adv);
        let s0 = ScalarState::new(&random(&g, 6), OperatorKind::Adv, 0.05).unwrap();
        let (mut e, mut r) = (s0.clone(), s0.clone());
        for _ in 0..100 {
            e = scalar_step(&e, &p, 1e-4, 10.0).unwrap();
            r = scalar_step_rk3(&r, &p, 1e-4, 10.0).unwrap();
        }
        assert!((e.pi() - r.pi()).norm() < 1e-3);
        assert!((e.log_amp() - r.log_amp()).abs() < 1e-4);
    }

    #[test]
    fn phi_accumulator_matches_closed_form() {
        // constant integrand g: Φ_t = -(1 - e^{-κ|k|²t})/(κ|k|²) ĝ
        let g = grid(16);
        let k = Wavenumber::new(2, 1);
        let f = SpectralField::single_pair(&g, k, re(1.0)).unwrap();
        let (kappa, t) = (0.3f64, 1.0f64);
        let exact = -(1.0 - (-kappa * 5.0 * t).exp()) / (kappa * 5.0);
        let mut errs = Vec::new();
        for steps in [10, 20, 40] {
            let mut acc = PhiAccumulator::new(&g, kappa);
            for j in 0..=steps {
                acc.push(&f, j as f64 * t / steps as f64).unwrap();
            }
            errs.push((acc.value().coefficient(k).re - exact).abs());
        }
        assert!(errs[0] / errs[1] > 3.8 && errs[1] / errs[2] > 3.8, "{errs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn transport_is_antisymmetric(seed in any::<u64>()) {
            let g = grid(16);
            let u = biot_savart(&random(&g, seed));
            let rho = random(&g, seed ^ 0x55);
            let l = apply_l(&u, &rho, OperatorKind::Adv).unwrap();
            prop_assert!(rho.inner(&l).abs() < 1e-12 * rho.norm() * l.norm().max(1.0));
        }

        #[test]
        fn composite_lns_matches_direct_sum(seed in any::<u64>()) {
            let g = grid(16);
            let w = random(&g, seed);
            let rho = random(&g, seed.wrapping_add(7));
            let a = apply_l(&biot_savart(&w), &rho, OperatorKind::Lns).unwrap();
            let b = apply_l_direct(&w, &rho).unwrap();
            prop_assert!((&a - &b).norm() <= 1e-10 * b.norm());
        }

        #[test]
        fn divergence_of_r_is_lns(seed in any::<u64>()) {
            let g = grid(16);
            let u = biot_savart(&random(&g, seed));
            let rho = random(&g, seed.wrapping_mul(3));
            let d = div(&r_operator(&u, &rho).unwrap());
            let l = apply_l(&u, &rho, OperatorKind::Lns).unwrap();
            prop_assert!((&d - &l).norm() <= 1e-10 * l.norm());
        }

        #[test]
        fn log_derivatives(seed in any::<u64>()) {
            let g = grid(16);
            let u = biot_savart(&random(&g, seed));
            let pi = random(&g, seed ^ 1);
            let pi = pi.scaled(1.0 / pi.norm());
            let kappa = 0.07;
            let grad_term = kappa * crate::norms::sobolev_norm_sq(&pi, 1.0);
            let adv = log_derivative(&pi, &PreparedVelocity::new(&u, OperatorKind::Adv), kappa).unwrap();
            prop_assert!((adv + grad_term).abs() < 1e-10 * grad_term);
            let p = PreparedVelocity::new(&u, OperatorKind::Lns);
            let lns = log_derivative(&pi, &p, kappa).unwrap();
            let stretch = pi.inner(&p.stretching(&pi).unwrap());
            prop_assert!((lns + grad_term + stretch).abs() < 1e-10 * (grad_term + stretch.abs()));
        }

        #[test]
        fn scale_equivariance(seed in any::<u64>(), c in 0.01f64..100.0) {
            let g = grid(16);
            let u = PreparedVelocity::new(&biot_savart(&random(&g, seed)), OperatorKind::Lns);
            let rho = random(&g, seed ^ 9);
            let a = scalar_step(&ScalarState::new(&rho, OperatorKind::Lns, 0.1).unwrap(), &u, 1e-3, 10.0).unwrap();
            let b = scalar_step(&ScalarState::new(&rho.scaled(c), OperatorKind::Lns, 0.1).unwrap(), &u, 1e-3, 10.0).unwrap();
            prop_assert!((a.pi() - b.pi()).norm() < 1e-12);
            prop_assert!((b.log_amp() - a.log_amp() - c.ln()).abs() < 1e-12);
        }
    }
}
