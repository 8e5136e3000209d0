//! Lyapunov and Furstenberg-Khasminskii estimators, spectral-median traces,
//! time scales and the staged stopping times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{filament_scale, sobolev_norm_sq, spectral_median, spectral_quantile};
use crate::ops::{project_high, project_low};
use crate::scalar::{OperatorKind, PreparedVelocity, ScalarState};

/// `t★(κ, M) = λ κ⁻¹ M⁻² log M` with `λ = a/2 + 5`, for any `M > 0`.
pub fn t_star_raw(kappa: f64, m: f64, alpha: f64) -> f64 {
    (alpha / 2.0 + 5.0) / kappa * m.powi(-2) * m.ln()
}

/// Diffusive time scale `t★(κ, M)`; requires `M ≥ 2`.
pub fn t_star(kappa: f64, m: f64, alpha: f64) -> Result<f64> {
    if !(m >= 2.0) {
        return Err(Error::InvalidParameter(format!("level {m} must be at least 2")));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidParameter(format!("diffusivity {kappa} must lie in (0, 1]")));
    }
    Ok(t_star_raw(kappa, m, alpha))
}

/// `t★^{κ,δ}(M) = t★(κ, M) M^δ`.
pub fn t_star_delta(kappa: f64, m: f64, alpha: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta {delta} must lie in [0, 1)")));
    }
    Ok(t_star(kappa, m, alpha)? * m.powf(delta))
}

/// Running integrals of the Furstenberg-Khasminskii functional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FkAccumulator {
    pub t_accum: f64,
    /// `∫ κ‖∇π‖² ds`
    pub int_grad: f64,
    /// `∫ ⟨π, Δu·∇⁻¹π⟩ ds` (LNS only)
    pub int_stretch: f64,
    /// Sum of the per-step increments of `log‖ϱ‖`.
    pub log_growth: f64,
    pub n_samples: u64,
}

impl FkAccumulator {
    /// Left-point update over one step from `before` to `after` under `u`.
    pub fn record(&mut self, before: &ScalarState, after: &ScalarState, u: &PreparedVelocity) -> Result<()> {
        let h = after.time() - before.time();
        self.int_grad += h * before.kappa() * sobolev_norm_sq(before.pi(), 1.0);
        if before.kind() == OperatorKind::Lns {
            self.int_stretch += h * before.pi().inner(&u.stretching(before.pi())?);
        }
        self.log_growth += after.log_amp() - before.log_amp();
        self.t_accum += h;
        self.n_samples += 1;
        Ok(())
    }

    /// `log_growth + int_grad + int_stretch`, zero for the exact dynamics.
    pub fn residual(&self) -> f64 {
        self.log_growth + self.int_grad + self.int_stretch
    }
}

/// Free-function form of [`FkAccumulator::record`].
pub fn accumulate_fk(acc: &mut FkAccumulator, before: &ScalarState, after: &ScalarState, u: &PreparedVelocity) -> Result<()> {
    acc.record(before, after, u)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub stderr: f64,
}

/// Number of batches used for the batch-means standard error.
pub const LAMBDA_BATCHES: usize = 10;

/// `λ̂ = (log_amp(T) - log_amp(t_burn)) / (T - t_burn)` with a batch-means
/// standard error over [`LAMBDA_BATCHES`] equal sub-intervals.
pub fn estimate_lambda(times: &[f64], log_amp: &[f64], t_burn: f64) -> Result<LambdaEstimate> {
    if times.len() != log_amp.len() {
        return Err(Error::DimensionMismatch { got: log_amp.len(), expected: times.len() });
    }
    let start = times.iter().position(|&t| t >= t_burn - 1e-12);
    let Some(start) = start else {
        return Err(Error::InvalidParameter("run ends before the burn-in".into()));
    };
    let ts = &times[start..];
    let ys = &log_amp[start..];
    if ts.len() < LAMBDA_BATCHES + 1 {
        return Err(Error::InvalidParameter(format!(
            "{} samples after burn-in, need at least {}",
            ts.len(),
            LAMBDA_BATCHES + 1
        )));
    }
    let span = ts[ts.len() - 1] - ts[0];
    let lambda = (ys[ys.len() - 1] - ys[0]) / span;
    let last = ts.len() - 1;
    let mut slopes = Vec::with_capacity(LAMBDA_BATCHES);
    for b in 0..LAMBDA_BATCHES {
        let i0 = b * last / LAMBDA_BATCHES;
        let i1 = (b + 1) * last / LAMBDA_BATCHES;
        slopes.push((ys[i1] - ys[i0]) / (ts[i1] - ts[i0]));
    }
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64;
    Ok(LambdaEstimate { lambda, stderr: (var / slopes.len() as f64).sqrt() })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MedianTrace {
    pub times: Vec<f64>,
    pub median: Vec<u64>,
    pub quantile2: Vec<u64>,
    pub filament: Vec<f64>,
}

impl MedianTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Appends `M(π_t)`, `M^{(2)}(π_t)` and `ℓ(π_t)`.
pub fn record_median(trace: &mut MedianTrace, state: &ScalarState) -> Result<()> {
    let pi = state.pi();
    let m = spectral_median(pi)?;
    let q = spectral_quantile(pi, 2.0)?;
    let l = filament_scale(pi)?;
    trace.times.push(state.time());
    trace.median.push(m);
    trace.quantile2.push(q);
    trace.filament.push(l);
    Ok(())
}

/// `‖ℋ_M ϱ‖ / ‖ℒ_M ϱ‖`.
pub fn energy_ratio(state: &ScalarState, m: f64) -> Result<f64> {
    let low = project_low(state.pi(), m).norm();
    if low == 0.0 {
        return Err(Error::InvalidParameter(format!("no energy at or below {m}")));
    }
    Ok(project_high(state.pi(), m).norm() / low)
}

/// One-step finite-difference derivative of the energy ratio, and the
/// bound `M (‖u‖_∞ [+ ‖Δu‖_∞]) (1 + ratio²)` it is compared against.
pub fn ratio_drift_diagnostic(before: &ScalarState, after: &ScalarState, u: &PreparedVelocity, m: f64) -> Result<(f64, f64)> {
    let r0 = energy_ratio(before, m)?;
    let r1 = energy_ratio(after, m)?;
    let h = after.time() - before.time();
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("states must be ordered in time".into()));
    }
    let mut sup = u.max_speed();
    if before.kind() == OperatorKind::Lns {
        sup += u.max_laplacian();
    }
    Ok(((r1 - r0) / h, m * sup * (1.0 + r0 * r0)))
}

/// Parameters of the staged stopping times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingSpec {
    pub m0: u64,
    pub kappa: f64,
    pub alpha: f64,
    pub delta: f64,
    pub q: f64,
}

impl StoppingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::InvalidParameter(format!("delta {} must lie in (0, 1/4)", self.delta)));
        }
        if !(self.q > 2.0) {
            return Err(Error::InvalidParameter(format!("q {} must exceed 2", self.q)));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::InvalidParameter(format!("diffusivity {} must lie in (0, 1]", self.kappa)));
        }
        if self.m0 < 2 {
            return Err(Error::InvalidParameter("initial level must be at least 2".into()));
        }
        Ok(())
    }

    /// Floor level `κ^{-q}`.
    pub fn floor(&self) -> f64 {
        self.kappa.powf(-self.q)
    }

    /// `M̂_i = (M0 - i) ∨ κ^{-q}`.
    pub fn level(&self, i: u64) -> f64 {
        (self.m0 as f64 - i as f64).max(self.floor())
    }

    /// `L = min{i : M̂_i ≤ κ^{-q}}`.
    pub fn last_stage(&self) -> u64 {
        let f = self.floor();
        if self.m0 as f64 <= f {
            0
        } else {
            (self.m0 as f64 - f).ceil() as u64
        }
    }

    /// Length `t★^{κ,δ}(M̂_i)` of stage `i` when nothing else happens.
    pub fn stage_cap(&self, i: u64) -> f64 {
        let m = self.level(i);
        t_star_raw(self.kappa, m, self.alpha) * m.powf(self.delta)
    }

    /// Deterministic bound `Σ_{i ≤ L} t★^{κ,δ}(M̂_i)` on `η`.
    pub fn eta_cap(&self) -> f64 {
        (0..=self.last_stage()).map(|i| self.stage_cap(i)).sum()
    }
}

/// Outcome of one stopping experiment. Infinite times mean "not reached
/// within the horizon".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRecord {
    pub m0: u64,
    /// First `t` with `M(ϱ_t) < M0 - 1`.
    pub tau: f64,
    /// First `t` with `M^{(2)}(ϱ_t) > M0`.
    pub sigma: f64,
    pub eta: f64,
    pub i_fin: u64,
    pub hit_within_tstar: bool,
    pub eta_cap: f64,
}

/// Online evaluation of the staged stopping times from a stream of
/// `(t, M_t, M^{(2)}_t)` observations.
#[derive(Clone, Debug)]
pub struct StoppingTracker {
    spec: StoppingSpec,
    stage: u64,
    stage_start: f64,
    eta: Option<(f64, u64)>,
    tau: f64,
    sigma: f64,
}

impl StoppingTracker {
    pub fn new(spec: StoppingSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, stage: 0, stage_start: 0.0, eta: None, tau: f64::INFINITY, sigma: f64::INFINITY })
    }

    pub fn spec(&self) -> &StoppingSpec {
        &self.spec
    }

    /// `(η, i_fin)` once determined.
    pub fn eta(&self) -> Option<(f64, u64)> {
        self.eta
    }

    /// Feeds the observation at time `t`; observations must be in time order.
    pub fn observe(&mut self, t: f64, median: u64, quantile2: u64) {
        let m0 = self.spec.m0;
        if self.tau.is_infinite() && median + 1 < m0 {
            self.tau = t;
        }
        if self.sigma.is_infinite() && quantile2 > m0 {
            self.sigma = t;
        }
        let last = self.spec.last_stage();
        while self.eta.is_none() {
            let i = self.stage;
            let cap_time = self.stage_start + self.spec.stage_cap(i);
            // σ_i fired through its time cap strictly before this observation.
            if cap_time < t {
                self.eta = Some((cap_time, i));
                break;
            }
            let next_hit = i < last && (median as f64) <= self.spec.level(i + 1);
            if next_hit {
                // τ_{i+1} = t ≤ σ_i: move on to the next stage.
                self.stage += 1;
                self.stage_start = t;
                continue;
            }
            if (quantile2 as f64) > self.spec.level(i) || cap_time <= t {
                self.eta = Some((t.min(cap_time), i));
            }
            break;
        }
    }

    pub fn record(&self) -> StoppingRecord {
        let t_star = t_star_raw(self.spec.kappa, self.spec.m0 as f64, self.spec.alpha);
        let (eta, i_fin) = self.eta.unwrap_or((f64::INFINITY, self.stage));
        StoppingRecord {
            m0: self.spec.m0,
            tau: self.tau,
            sigma: self.sigma,
            eta,
            i_fin,
            hit_within_tstar: self.tau <= t_star,
            eta_cap: self.spec.eta_cap(),
        }
    }
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Least-squares fit `y = a + b x`; returns `(b, stderr(b), a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { got: y.len(), expected: x.len() });
    }
    if x.len() < 4 {
        return Err(Error::InvalidParameter(format!("fit needs at least 4 points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = (rss / (n - 2.0) / sxx).sqrt();
    Ok((slope, se, intercept))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_star_examples() {
        let t = t_star(0.1, 10.0, 12.0).unwrap();
        assert!((t - 11.0 * 10.0 * 0.01 * 10f64.ln()).abs() < 1e-12);
        assert!((t - 2.532_843_602_293_450_3).abs() < 1e-9);
        let ratio = t_star(0.1, 20.0, 12.0).unwrap() / t;
        assert!((ratio - 0.25 * 20f64.ln() / 10f64.ln()).abs() < 1e-14);
        assert!((t_star(0.05, 10.0, 12.0).unwrap() - 2.0 * t).abs() < 1e-12);
        assert!(t_star(0.1, 1.5, 12.0).is_err());
        let td = t_star_delta(0.1, 10.0, 12.0, 0.2).unwrap();
        assert!((td - t * 10f64.powf(0.2)).abs() < 1e-12);
        assert!((td - 4.0143).abs() < 1e-3);
        assert_eq!(t_star_delta(0.1, 10.0, 12.0, 0.0).unwrap(), t);
        assert!(t_star_delta(0.1, 10.0, 12.0, 0.3).unwrap() > td);
    }

    #[test]
    fn lambda_from_linear_log_amplitude() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let amps: Vec<f64> = times.iter().map(|t| 3.0 - 0.7 * t).collect();
        let est = estimate_lambda(&times, &amps, 2.0).unwrap();
        assert!((est.lambda + 0.7).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
        assert!(estimate_lambda(&times, &amps, 20.0).is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = wilson_interval(25, 50, 1.96);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_slope() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (b, se, a) = linear_fit(&x, &y).unwrap();
        assert!((b - 2.0).abs() < 1e-14 && se < 1e-12 && (a + 1.0).abs() < 1e-13);
        assert!(linear_fit(&x[..3], &y[..3]).is_err());
    }

    fn spec(m0: u64, kappa: f64) -> StoppingSpec {
        StoppingSpec { m0, kappa, alpha: 12.0, delta: 0.2, q: 2.5 }
    }

    #[test]
    fn stage_levels() {
        // κ^{-q} = 0.5^{-2.5} ≈ 5.66: levels 10, 9, 8, 7, 6, 5.66
        let s = spec(10, 0.5);
        assert_eq!(s.last_stage(), 5);
        assert_eq!(s.level(3), 7.0);
        assert!((s.level(5) - 0.5f64.powf(-2.5)).abs() < 1e-12);
        let cap: f64 = (0..=5).map(|i| s.stage_cap(i)).sum();
        assert_eq!(s.eta_cap(), cap);
        // tiny κ: the floor dominates and only stage 0 exists
        let s = spec(16, 1e-3);
        assert_eq!(s.last_stage(), 0);
        assert!(s.eta_cap() < 1e-7);
    }

    #[test]
    fn tracker_without_motion_stops_at_the_caps() {
        let s = spec(10, 0.5);
        let mut tr = StoppingTracker::new(s).unwrap();
        let mut t = 0.0;
        while tr.eta().is_none() {
            tr.observe(t, 10, 10);
            t += 1e-3;
        }
        let (eta, i_fin) = tr.eta().unwrap();
        assert_eq!(i_fin, 0);
        assert!((eta - s.stage_cap(0)).abs() < 1e-12);
        let rec = tr.record();
        assert!(rec.tau.is_infinite() && !rec.hit_within_tstar);
        assert!(rec.eta <= rec.eta_cap);
    }

    #[test]
    fn tracker_follows_descent() {
        let s = spec(10, 0.5);
        let mut tr = StoppingTracker::new(s).unwrap();
        tr.observe(0.0, 10, 10);
        tr.observe(0.01, 9, 9);
        tr.observe(0.02, 7, 7);
        tr.observe(0.03, 5, 5);
        // stage 5 reached at t = 0.03; it ends by its cap
        let mut t = 0.03;
        while tr.eta().is_none() {
            t += 1e-3;
            tr.observe(t, 5, 5);
        }
        let (eta, i_fin) = tr.eta().unwrap();
        assert_eq!(i_fin, 5);
        assert!((eta - 0.03 - s.stage_cap(5)).abs() < 1e-12);
        let rec = tr.record();
        assert_eq!(rec.tau, 0.02);
        assert!(rec.eta <= rec.eta_cap);
    }

    #[test]
    fn tracker_stops_on_high_frequency_excursion() {
        let s = spec(10, 0.5);
        let mut tr = StoppingTracker::new(s).unwrap();
        tr.observe(0.0, 10, 10);
        tr.observe(0.01, 10, 11);
        assert_eq!(tr.eta(), Some((0.01, 0)));
        assert_eq!(tr.record().sigma, 0.01);
    }
}
