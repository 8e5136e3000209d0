//! First Wiener chaos of the linearised scalar: closed-form variances by the
//! Itô isometry, a Monte Carlo cross-check over noise paths, and the lattice
//! sums behind the lower bounds.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::t_star;
use crate::error::{Error, Result};
use crate::field::{SpectralField, VectorField};
use crate::grid::{WaveGrid, Wavenumber};
use crate::noise::{sample_ou_increments, NoiseModel};
use crate::norms::sobolev_norm_sq;
use crate::ops::HeatPropagate;
use crate::quadrature::adaptive_simpson;
use crate::scalar::{apply_l, heat_flow, OperatorKind};

/// Relative accuracy of the outer time quadrature.
pub const TIME_QUADRATURE_TOL: f64 = 1e-8;

/// Default Monte Carlo time step.
pub const DEFAULT_MC_STEP: f64 = 0.005;

/// Wavenumbers `0 < |ℓ| ≤ 1` for advection and `0 < |ℓ| ≤ √2` for LNS.
pub fn default_ell_set(kind: OperatorKind) -> Vec<Wavenumber> {
    let max = match kind {
        OperatorKind::Adv => 1,
        OperatorKind::Lns => 2,
    };
    let mut out = Vec::new();
    for a in -1..=1 {
        for b in -1..=1 {
            let l = Wavenumber::new(a, b);
            if !l.is_zero() && l.norm_sq() <= max {
                out.push(l);
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct ChaosSpec {
    pub rho0: SpectralField,
    pub kappa: f64,
    pub t: f64,
    pub ell_set: Vec<Wavenumber>,
    /// Noise modes kept: `0 < |k| ≤ k_max`.
    pub k_max: i64,
    pub kind: OperatorKind,
    pub alpha: f64,
    pub sigma: f64,
}

impl ChaosSpec {
    /// Spec at `t = t★(κ, M)` with the default ℓ set and `k_max` at the grid cutoff.
    pub fn at_t_star(rho0: &SpectralField, kappa: f64, m: f64, kind: OperatorKind, alpha: f64) -> Result<Self> {
        Ok(Self {
            rho0: rho0.clone(),
            kappa,
            t: t_star(kappa, m, alpha)?,
            ell_set: default_ell_set(kind),
            k_max: rho0.grid().cutoff(),
            kind,
            alpha,
            sigma: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::InvalidParameter(format!("time {} must be positive", self.t)));
        }
        if self.k_max <= 0 {
            return Err(Error::InvalidParameter("k_max must be positive".into()));
        }
        let cutoff = self.rho0.grid().cutoff();
        if self.k_max > cutoff {
            return Err(Error::InvalidParameter(format!("k_max {} exceeds the grid cutoff {cutoff}", self.k_max)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("diffusivity {} must be positive", self.kappa)));
        }
        let radius_sq = match self.kind {
            OperatorKind::Adv => 1,
            OperatorKind::Lns => 2,
        };
        for l in &self.ell_set {
            if l.is_zero() || l.norm_sq() > radius_sq {
                return Err(Error::InvalidParameter(format!("ℓ = {l} lies outside the projection ball")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosVariance {
    pub per_ell: Vec<(Wavenumber, f64)>,
    pub total: f64,
}

/// `∫_0^t I(s)² ds` with `I(s) = ∫_s^t e^{-A(t-r) - Br - C(r-s)} dr`.
pub fn time_integral(a: f64, b: f64, c: f64, t: f64) -> f64 {
    let d = a - b - c;
    let inner = |s: f64| {
        let tau = t - s;
        let shape = if d == 0.0 { tau } else { (d * tau).exp_m1() / d };
        (-a * tau - b * s).exp() * shape
    };
    adaptive_simpson(|s| inner(s).powi(2), 0.0, t, TIME_QUADRATURE_TOL, 0.0)
}

/// Geometric weight of the noise mode `k` in the chaos coefficient at `ℓ`.
pub fn chaos_weight(kind: OperatorKind, l: Wavenumber, k: Wavenumber) -> f64 {
    let kp = k.perp().dot(l) as f64;
    match kind {
        OperatorKind::Adv => kp * kp,
        OperatorKind::Lns => {
            let j = l - k;
            let c = (1.0 - k.norm_sq() as f64 / j.norm_sq() as f64) * kp;
            c * c
        }
    }
}

/// `E|Φ̂(ℓ)|²` for each ℓ in the spec, summed over the noise modes.
pub fn first_chaos_variance(spec: &ChaosSpec) -> Result<ChaosVariance> {
    spec.validate()?;
    let modes: Vec<(Wavenumber, f64)> = spec
        .rho0
        .modes()
        .filter(|(j, c)| !j.is_zero() && c.norm_sqr() > 0.0)
        .map(|(j, c)| (j, c.norm_sqr()))
        .collect();
    let kmax_sq = spec.k_max * spec.k_max;
    let s2 = spec.sigma * spec.sigma;
    let mut per_ell = Vec::with_capacity(spec.ell_set.len());
    for &l in &spec.ell_set {
        let mut v = 0.0;
        for &(j, amp) in &modes {
            let k = l - j;
            let ks = k.norm_sq();
            if ks == 0 || ks > kmax_sq {
                continue;
            }
            let w = chaos_weight(spec.kind, l, k);
            if w == 0.0 {
                continue;
            }
            let (a, b, c) = (spec.kappa * l.norm_sq() as f64, spec.kappa * j.norm_sq() as f64, ks as f64);
            v += s2 * w * amp * (ks as f64).powf(-spec.alpha / 2.0 - 1.0) * time_integral(a, b, c, spec.t);
        }
        per_ell.push((l, v));
    }
    let total = per_ell.iter().map(|(_, v)| v).sum();
    Ok(ChaosVariance { per_ell, total })
}

pub fn first_chaos_variance_adv(spec: &ChaosSpec) -> Result<ChaosVariance> {
    if spec.kind != OperatorKind::Adv {
        return Err(Error::InvalidParameter("spec is not for the advection operator".into()));
    }
    first_chaos_variance(spec)
}

pub fn first_chaos_variance_lns(spec: &ChaosSpec) -> Result<ChaosVariance> {
    if spec.kind != OperatorKind::Lns {
        return Err(Error::InvalidParameter("spec is not for the LNS operator".into()));
    }
    first_chaos_variance(spec)
}

/// Total variance over `κ⁻¹ M⁻⁶ ‖ϱ₀‖²_{H^{-s}}`, `s = a/2` (advection) or `a/2 + 1` (LNS).
pub fn lower_bound_ratio(spec: &ChaosSpec, m: f64) -> Result<f64> {
    let total = first_chaos_variance(spec)?.total;
    let s = match spec.kind {
        OperatorKind::Adv => spec.alpha / 2.0,
        OperatorKind::Lns => spec.alpha / 2.0 + 1.0,
    };
    let scale = sobolev_norm_sq(&spec.rho0, -s) / (spec.kappa * m.powi(6));
    if scale == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(total / scale)
}

/// `Σ_{0<|ℓ|≤√2} (|ℓ|² - 2⟨k,ℓ⟩)² ⟨k^⊥,ℓ⟩²`, exact.
pub fn geometric_sum(k: Wavenumber) -> Result<i64> {
    if k.is_zero() {
        return Err(Error::InvalidParameter("geometric sum needs k ≠ 0".into()));
    }
    Ok(default_ell_set(OperatorKind::Lns)
        .into_iter()
        .map(|l| {
            let a = l.norm_sq() - 2 * k.dot(l);
            let b = k.perp().dot(l);
            a * a * b * b
        })
        .sum())
}

/// `(Σ_k |k|^{-2α} ‖e_k f‖²_{H^{-α}}, ‖f‖²_{H^{-α}})` with `k` over the active grid.
pub fn norm_equivalence_check(f: &SpectralField, alpha: f64) -> (f64, f64) {
    shifted_sum(f, alpha, |_, _| 1.0)
}

/// Same as [`norm_equivalence_check`] for `e_k (1 - |k|²(-Δ)⁻¹) ψ` in `H^{-(α+1)}`.
pub fn lns_norm_equivalence_check(psi: &SpectralField, alpha: f64) -> (f64, f64) {
    let (lhs, _) = shifted_sum(psi, alpha, |k, j| {
        let m = 1.0 - k.norm_sq() as f64 / j.norm_sq() as f64;
        m * m / (j + k).norm_sq() as f64
    });
    (lhs, sobolev_norm_sq(psi, -(alpha + 1.0)))
}

fn shifted_sum(f: &SpectralField, alpha: f64, weight: impl Fn(Wavenumber, Wavenumber) -> f64) -> (f64, f64) {
    let g = f.grid();
    let modes: Vec<(Wavenumber, f64)> =
        f.modes().filter(|(j, c)| !j.is_zero() && c.norm_sqr() > 0.0).map(|(j, c)| (j, c.norm_sqr())).collect();
    let mut lhs = 0.0;
    for k in g.active_modes().filter(|k| !k.is_zero()) {
        let wk = (k.norm_sq() as f64).powf(-alpha);
        let mut inner = 0.0;
        for &(j, a) in &modes {
            let s = j + k;
            if s.is_zero() {
                continue;
            }
            inner += (s.norm_sq() as f64).powf(-alpha) * weight(k, j) * a;
        }
        lhs += wk * inner;
    }
    (lhs, sobolev_norm_sq(f, -alpha))
}

/// `Φ̂(ℓ)` for every ℓ of the spec along one noise path.
pub type PathCoefficients = Vec<Complex64>;

/// Simulates `X̃` exactly (OU restricted to `|k| ≤ k_max`, started at 0),
/// forms `Φ[X̃, Y]_t = -∫_0^t P^κ_{t-s} L[X̃_s] Y_s ds` by the trapezoidal rule
/// and returns its coefficients on the ℓ set. Path `p` of seed `s` uses
/// ChaCha8 stream `p`.
pub fn chaos_mc_path(spec: &ChaosSpec, seed: u64, path: u64, step: f64) -> Result<PathCoefficients> {
    spec.validate()?;
    let g: &Arc<WaveGrid> = spec.rho0.grid();
    let model = NoiseModel::new(g, spec.alpha, spec.sigma, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    let steps = (spec.t / step).ceil().max(1.0) as usize;
    let dt = spec.t / steps as f64;
    let kmax_sq = (spec.k_max * spec.k_max) as f64;
    let idx: Vec<usize> =
        spec.ell_set.iter().map(|&l| g.index_of(l).ok_or(Error::InactiveMode(l.k1, l.k2))).collect::<Result<_>>()?;
    let decay: Vec<f64> = spec.ell_set.iter().map(|l| (-spec.kappa * l.norm_sq() as f64 * dt).exp()).collect();

    let mut x = VectorField::zeros(g);
    let sample = |x: &VectorField, s: f64| -> Result<Vec<Complex64>> {
        let y = heat_flow(&spec.rho0, spec.kappa, s);
        let lxy = apply_l(x, &y, spec.kind)?;
        Ok(idx.iter().map(|&i| lxy.coeffs()[i]).collect())
    };
    let mut prev = sample(&x, 0.0)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); idx.len()];
    for n in 1..=steps {
        let eta = sample_ou_increments(&model, dt, &mut rng).map(|i, c| if g.ksq(i) <= kmax_sq { c } else { Complex64::new(0.0, 0.0) });
        let mut next = x.heat_propagate(dt, 1.0);
        next.axpy(1.0, &model.velocity_from(&eta));
        x = next;
        let cur = sample(&x, n as f64 * dt)?;
        for m in 0..acc.len() {
            acc[m] = (acc[m] + prev[m] * (0.5 * dt)) * decay[m] + cur[m] * (0.5 * dt);
        }
        prev = cur;
    }
    Ok(acc.into_iter().map(|c| -c).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub paths: usize,
    /// Mean of `|Φ̂(ℓ)|²` per ℓ.
    pub per_ell: Vec<(Wavenumber, f64)>,
    /// Standard error of each entry of `per_ell`.
    pub per_ell_stderr: Vec<f64>,
    /// Mean of `Σ_ℓ |Φ̂(ℓ)|²`.
    pub total: f64,
    pub total_stderr: f64,
    /// Sample mean of `Φ̂(ℓ)` and its standard error per real component.
    pub first_moment: Vec<(Wavenumber, Complex64, f64)>,
}

/// Reduces per-path coefficients in the given order.
pub fn summarize_paths(ell_set: &[Wavenumber], paths: &[PathCoefficients]) -> Result<McSummary> {
    let n = paths.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 paths, got {n}")));
    }
    let nf = n as f64;
    let mut per = vec![0.0; ell_set.len()];
    let mut per_sq = vec![0.0; ell_set.len()];
    let mut mean = vec![Complex64::new(0.0, 0.0); ell_set.len()];
    let mut totals = Vec::with_capacity(n);
    for p in paths {
        if p.len() != ell_set.len() {
            return Err(Error::DimensionMismatch { got: p.len(), expected: ell_set.len() });
        }
        let mut t = 0.0;
        for (m, c) in p.iter().enumerate() {
            per[m] += c.norm_sqr();
            per_sq[m] += c.norm_sqr().powi(2);
            mean[m] += c;
            t += c.norm_sqr();
        }
        totals.push(t);
    }
    let total = totals.iter().sum::<f64>() / nf;
    let var = totals.iter().map(|t| (t - total).powi(2)).sum::<f64>() / (nf - 1.0);
    let first_moment = ell_set
        .iter()
        .enumerate()
        .map(|(m, &l)| {
            let mu = mean[m] / nf;
            // per-component variance of Φ̂ is half the second moment about the mean
            let v = (per[m] / nf - mu.norm_sqr()) / 2.0;
            (l, mu, (v * nf / (nf - 1.0) / nf).sqrt())
        })
        .collect();
    Ok(McSummary {
        paths: n,
        per_ell: ell_set.iter().zip(&per).map(|(&l, &v)| (l, v / nf)).collect(),
        per_ell_stderr: per
            .iter()
            .zip(&per_sq)
            .map(|(&a, &b)| ((b / nf - (a / nf).powi(2)).max(0.0) / (nf - 1.0)).sqrt())
            .collect(),
        total,
        total_stderr: (var / nf).sqrt(),
        first_moment,
    })
}

/// Sequential Monte Carlo estimate over paths `0..paths`.
pub fn chaos_monte_carlo(spec: &ChaosSpec, seed: u64, paths: u64, step: f64) -> Result<McSummary> {
    let coeffs = (0..paths).map(|p| chaos_mc_path(spec, seed, p, step)).collect::<Result<Vec<_>>>()?;
    summarize_paths(&spec.ell_set, &coeffs)
}
