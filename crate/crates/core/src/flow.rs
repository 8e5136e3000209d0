//! Stochastic Navier-Stokes in vorticity form, `∂t w + u·∇w = Δw + curl Pξ`,
//! the Gaussian process `X` and the bilinear map `Ψ`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{SpectralField, VectorField};
use crate::grid::WaveGrid;
use crate::noise::{NoiseModel, NoiseSource};
use crate::norms::vector_sobolev_norm;
use crate::ops::{biot_savart, curl, grad, leray_project, HeatPropagate};
use crate::transform::{from_physical, from_physical_pair, max_speed, to_physical_pair, vector_to_physical};

/// Default CFL constant in `h ≤ c / (n max|u|)`.
pub const DEFAULT_CFL: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct FlowState {
    w: SpectralField,
    u: VectorField,
    t: f64,
}

impl FlowState {
    pub fn new(w: SpectralField, t: f64) -> Self {
        let u = biot_savart(&w);
        Self { w, u, t }
    }

    pub fn zero(grid: &Arc<WaveGrid>) -> Self {
        Self::new(SpectralField::zeros(grid), 0.0)
    }

    /// Starts from the divergence-free part of `u0`.
    pub fn from_velocity(u0: &VectorField) -> Self {
        Self::new(curl(&leray_project(u0)), 0.0)
    }

    pub fn vorticity(&self) -> &SpectralField {
        &self.w
    }

    pub fn velocity(&self) -> &VectorField {
        &self.u
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<WaveGrid> {
        self.w.grid()
    }

    /// Largest step allowed by the CFL guard.
    pub fn cfl_limit(&self, c_cfl: f64) -> f64 {
        let (a, b) = vector_to_physical(&self.u);
        cfl_bound(self.grid().n(), max_speed(&a, &b), c_cfl)
    }
}

fn cfl_bound(n: usize, speed: f64, c_cfl: f64) -> f64 {
    if speed == 0.0 {
        f64::INFINITY
    } else {
        c_cfl / (n as f64 * speed)
    }
}

/// `u·∇w` by the dealiased pseudo-spectral product; returns it with `max|u|`.
fn advection(u: &VectorField, w: &SpectralField) -> (SpectralField, f64) {
    let (u1, u2) = vector_to_physical(u);
    let dw = grad(w);
    let (d1, d2) = to_physical_pair(&dw.c1, &dw.c2).expect("same grid");
    let prod: Vec<f64> = (0..u1.len()).map(|i| u1[i] * d1[i] + u2[i] * d2[i]).collect();
    let n = from_physical(w.grid(), &prod).expect("grid-sized samples");
    (n, max_speed(&u1, &u2))
}

/// One exponential-Euler step with exact OU noise, drawing the increment
/// from `noise`.
pub fn sns_step<S: NoiseSource + ?Sized>(state: &FlowState, noise: &mut S, h: f64, c_cfl: f64) -> Result<FlowState> {
    let eta = noise.ou_increment(h);
    sns_step_with(state, noise.model(), &eta, h, c_cfl)
}

/// As [`sns_step`] with a given OU increment `η_k` (see
/// [`crate::noise::sample_ou_increments`]).
pub fn sns_step_with(state: &FlowState, model: &NoiseModel, eta: &SpectralField, h: f64, c_cfl: f64) -> Result<FlowState> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {h} must be positive")));
    }
    let (nl, speed) = advection(&state.u, &state.w);
    let h_max = cfl_bound(state.grid().n(), speed, c_cfl);
    if h > h_max {
        return Err(Error::Cfl { h, h_max });
    }
    let g = state.grid();
    let (w, n, e) = (state.w.coeffs(), nl.coeffs(), eta.coeffs());
    let next = state.w.map(|i, _| (w[i] - n[i] * h) * (-g.ksq(i) * h).exp() + e[i] * model.vorticity_multiplier(i));
    let t = state.t + h;
    if !next.is_finite() {
        return Err(Error::NonFinite { t });
    }
    Ok(FlowState::new(next, t))
}

/// Gaussian process `∂t X - ΔX = Pξ` advanced by exact per-mode OU steps.
#[derive(Clone, Debug)]
pub struct XProcess {
    x: VectorField,
    t: f64,
}

impl XProcess {
    pub fn new(u0: &VectorField) -> Self {
        Self { x: leray_project(u0), t: 0.0 }
    }

    pub fn value(&self) -> &VectorField {
        &self.x
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step<S: NoiseSource + ?Sized>(&mut self, noise: &mut S, h: f64) {
        let eta = noise.ou_increment(h);
        self.step_with(noise.model(), &eta, h);
    }

    /// Uses the same increments as [`sns_step_with`], so `u - X` is the
    /// nonlinear remainder.
    pub fn step_with(&mut self, model: &NoiseModel, eta: &SpectralField, h: f64) {
        let mut next = self.x.heat_propagate(h, 1.0);
        next.axpy(1.0, &model.velocity_from(eta));
        self.x = next;
        self.t += h;
    }
}

/// `X` started at `u0`; advance it with [`XProcess::step`].
pub fn make_x_process(u0: &VectorField) -> XProcess {
    XProcess::new(u0)
}

pub use crate::ops::heat_propagate;

/// Samples `f(t0 + i dt)`, `i = 0..len`.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    t0: f64,
    dt: f64,
    samples: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn new(t0: f64, dt: f64) -> Self {
        assert!(dt > 0.0);
        Self { t0, dt, samples: Vec::new() }
    }

    pub fn push(&mut self, sample: T) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.dt * (self.samples.len().saturating_sub(1)) as f64
    }

    /// Sample at time `s`, which must fall on the sampling grid.
    pub fn at(&self, s: f64) -> Result<&T> {
        let x = (s - self.t0) / self.dt;
        let i = x.round();
        if (x - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.samples.len() {
            return Err(Error::Coverage(format!("no sample at t = {s}")));
        }
        Ok(&self.samples[i as usize])
    }
}

/// Quadrature nodes `0, step, .., t`; the step must divide `t`.
pub(crate) fn quadrature_nodes(t: f64, step: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) || !(step > 0.0) {
        return Err(Error::InvalidParameter(format!("quadrature on [0, {t}] with step {step}")));
    }
    let m = (t / step).round();
    if (m * step - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Coverage(format!("step {step} does not divide {t}")));
    }
    Ok((0..=m as usize).map(|j| j as f64 * step).collect())
}

/// `div(a ⊗_s b)` for the symmetrised tensor product.
fn div_sym_tensor(a: &VectorField, b: &VectorField) -> VectorField {
    let (a1, a2) = vector_to_physical(a);
    let (b1, b2) = vector_to_physical(b);
    let t11: Vec<f64> = a1.iter().zip(&b1).map(|(x, y)| x * y).collect();
    let t22: Vec<f64> = a2.iter().zip(&b2).map(|(x, y)| x * y).collect();
    let t12: Vec<f64> = (0..a1.len()).map(|i| 0.5 * (a1[i] * b2[i] + a2[i] * b1[i])).collect();
    let g = a.grid();
    let (s11, s22) = from_physical_pair(g, &t11, &t22).expect("grid-sized samples");
    let s12 = from_physical(g, &t12).expect("grid-sized samples");
    let (g11, g12, g22) = (grad(&s11), grad(&s12), grad(&s22));
    let c1 = &g11.c1 + &g12.c2;
    let c2 = &g12.c1 + &g22.c2;
    VectorField::new(c1, c2).expect("same grid")
}

/// `Ψ[w1, w2]_t = -∫_0^t P_{t-s} P div(w1 ⊗_s w2) ds` by the trapezoidal rule.
pub fn psi_bilinear(
    w1: &Trajectory<VectorField>,
    w2: &Trajectory<VectorField>,
    t: f64,
    quadrature_step: f64,
) -> Result<VectorField> {
    let nodes = quadrature_nodes(t, quadrature_step)?;
    let first = w1.at(0.0)?;
    let mut acc = VectorField::zeros(first.grid());
    let last = nodes.len() - 1;
    for (j, &s) in nodes.iter().enumerate() {
        let (a, b) = (w1.at(s)?, w2.at(s)?);
        let weight = if j == 0 || j == last { 0.5 } else { 1.0 } * quadrature_step;
        let f = leray_project(&div_sym_tensor(a, b)).heat_propagate(t - s, 1.0);
        acc.axpy(-weight, &f);
    }
    Ok(leray_project(&acc))
}

/// `log V_{r,β}(u) = r log(1 + ‖u‖²_{H^β}) + c★‖u‖²_{H¹}`.
pub fn log_lyapunov_functional(u: &VectorField, r: f64, beta: f64, c_star: f64) -> f64 {
    let hb = vector_sobolev_norm(u, beta).powi(2);
    let h1 = vector_sobolev_norm(u, 1.0).powi(2);
    r * hb.ln_1p() + c_star * h1
}

/// `V_{r,β}(u) = (1 + ‖u‖²_{H^β})^r exp(c★‖u‖²_{H¹})`, evaluated in log space.
pub fn lyapunov_functional(u: &VectorField, r: f64, beta: f64, c_star: f64) -> f64 {
    log_lyapunov_functional(u, r, beta, c_star).exp()
}

/// The regularity exponent `(a - 3)/2` used by default in the functional.
pub fn default_lyapunov_beta(alpha: f64) -> f64 {
    (alpha - 3.0) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DealiasFraction, Wavenumber};
    use crate::noise::RngNoise;
    use num_complex::Complex64;

    fn grid(n: usize) -> Arc<WaveGrid> {
        WaveGrid::new(n, DealiasFraction::TWO_THIRDS).unwrap()
    }

    fn quiet(g: &Arc<WaveGrid>) -> RngNoise {
        RngNoise::new(NoiseModel::new(g, 12.0, 0.0, 1).unwrap())
    }

    #[test]
    fn shear_mode_decays_exactly() {
        let g = grid(16);
        let w = SpectralField::single_pair(&g, Wavenumber::new(2, 0), Complex64::new(0.3, 0.1)).unwrap();
        let mut s = FlowState::new(w.clone(), 0.0);
        let mut noise = quiet(&g);
        for _ in 0..10 {
            s = sns_step(&s, &mut noise, 0.01, DEFAULT_CFL).unwrap();
        }
        let expect = w.scaled((-4.0f64 * 0.1).exp());
        assert!((s.vorticity() - &expect).norm() < 1e-15);
        assert!((s.time() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_stays_zero_without_noise() {
        let g = grid(16);
        let mut s = FlowState::zero(&g);
        let mut noise = quiet(&g);
        for _ in 0..5 {
            s = sns_step(&s, &mut noise, 0.1, DEFAULT_CFL).unwrap();
        }
        assert!(s.vorticity().is_zero());
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid(16);
        let w = SpectralField::single_pair(&g, Wavenumber::new(1, 0), Complex64::new(5.0, 0.0)).unwrap();
        let s = FlowState::new(w, 0.0);
        let limit = s.cfl_limit(DEFAULT_CFL);
        let e = sns_step(&s, &mut quiet(&g), 2.0 * limit, DEFAULT_CFL).unwrap_err();
        assert!(matches!(e, Error::Cfl { .. }));
    }

    #[test]
    fn velocity_matches_vorticity() {
        let g = grid(16);
        let mut noise = RngNoise::new(NoiseModel::new(&g, 12.0, 1.0, 4).unwrap());
        let mut s = FlowState::zero(&g);
        for _ in 0..20 {
            s = sns_step(&s, &mut noise, 0.01, DEFAULT_CFL).unwrap();
        }
        assert!(s.velocity().divergence_defect() < 1e-12);
        assert!((&curl(s.velocity()) - s.vorticity()).norm() <= 1e-12 * s.vorticity().norm());
        assert!(s.vorticity().hermitian_defect() < 1e-15);
    }

    #[test]
    fn x_process_without_noise_is_heat_flow() {
        let g = grid(16);
        let w = SpectralField::single_pair(&g, Wavenumber::new(1, 2), Complex64::new(1.0, 0.5)).unwrap();
        let u0 = biot_savart(&w);
        let mut x = make_x_process(&u0);
        let mut noise = quiet(&g);
        for _ in 0..8 {
            x.step(&mut noise, 0.05);
        }
        let expect = u0.heat_propagate(0.4, 1.0);
        let mut d = x.value().clone();
        d.axpy(-1.0, &expect);
        assert!(d.norm() < 1e-14);
    }

    #[test]
    fn psi_of_zero_is_zero() {
        let g = grid(16);
        let a = biot_savart(&SpectralField::single_pair(&g, Wavenumber::new(1, 0), Complex64::new(1.0, 0.0)).unwrap());
        let mut t1 = Trajectory::new(0.0, 0.1);
        let mut t2 = Trajectory::new(0.0, 0.1);
        for _ in 0..11 {
            t1.push(a.clone());
            t2.push(VectorField::zeros(&g));
        }
        assert!(psi_bilinear(&t1, &t2, 1.0, 0.1).unwrap().norm() == 0.0);
        assert!(matches!(psi_bilinear(&t1, &t1, 2.0, 0.1), Err(Error::Coverage(_))));
    }

    #[test]
    fn lyapunov_examples() {
        let g = grid(16);
        assert_eq!(lyapunov_functional(&VectorField::zeros(&g), 2.0, 4.5, 0.01), 1.0);
        let c1 = SpectralField::single_pair(&g, Wavenumber::new(1, 0), Complex64::new(1.0, 0.0)).unwrap();
        let u = VectorField::new(c1, SpectralField::zeros(&g)).unwrap();
        let v = lyapunov_functional(&u, 1.0, 2.0, 0.01);
        assert!((v - 3.0 * 0.02f64.exp()).abs() < 1e-14);
        assert!(lyapunov_functional(&u.scaled(2.0), 1.0, 2.0, 0.01) > v);
        assert_eq!(default_lyapunov_beta(12.0), 4.5);
    }
}
