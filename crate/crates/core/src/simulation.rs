//! Coupled SNS flow and scalar: burn-in, CFL substepping, diagnostics
//! sampling, checkpoints and the stopping-time experiment.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    estimate_lambda, FkAccumulator, LambdaEstimate, MedianTrace, StoppingRecord, StoppingSpec, StoppingTracker,
};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::flow::{sns_step, FlowState};
use crate::grid::{WaveGrid, Wavenumber};
use crate::initial::{annulus, power_law, single_mode};
use crate::noise::{sample_stationary_ou, NoiseModel, NoiseSource, RngNoise};
use crate::norms::{filament_scale, spectral_median, spectral_quantile, vector_sobolev_norm};
use crate::scalar::{advance_scalar, log_derivative, OperatorKind, PreparedVelocity, ScalarScheme, ScalarState};

/// ChaCha8 stream used for the initial scalar.
pub const SCALAR_STREAM: u64 = 1;
/// ChaCha8 stream used for a stationary initial velocity.
pub const VELOCITY_STREAM: u64 = 2;

#[derive(Clone, Debug)]
pub enum InitialVelocity {
    Zero,
    /// Draw from the stationary law of the linear (Stokes) flow.
    Stationary,
    /// Random vorticity with `E|ŵ(k)|² ∝ |k|^{-2s}` and unit norm.
    PowerLaw(f64),
    /// Given vorticity, resampled onto the flow grid.
    Field(SpectralField),
}

#[derive(Clone, Debug)]
pub enum InitialScalar {
    SingleMode(i64),
    Annulus(u64),
    Field(SpectralField),
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub flow_grid: Arc<WaveGrid>,
    pub scalar_grid: Arc<WaveGrid>,
    pub alpha: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub kind: OperatorKind,
    pub scheme: ScalarScheme,
    pub dt: f64,
    /// Flow-only spin-up before the scalar starts.
    pub t_burn: f64,
    /// Scalar run length after the burn-in.
    pub t_total: f64,
    pub c_cfl: f64,
    pub u0: InitialVelocity,
    pub rho0: InitialScalar,
    /// Emit a sample every this many steps.
    pub record_every: u64,
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("dt", self.dt), ("t_total", self.t_total), ("c_cfl", self.c_cfl)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.t_burn >= 0.0) {
            return Err(Error::InvalidParameter(format!("t_burn = {} must be nonnegative", self.t_burn)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        if self.flow_grid.cutoff() > self.scalar_grid.cutoff() {
            return Err(Error::InvalidParameter("flow grid must not resolve more modes than the scalar grid".into()));
        }
        Ok(())
    }

    /// Number of macro steps; the last step ends exactly at `t_total`.
    pub fn steps(&self) -> u64 {
        (self.t_total / self.dt).round().max(1.0) as u64
    }

    pub fn step_size(&self) -> f64 {
        self.t_total / self.steps() as f64
    }

    pub fn initial_scalar(&self, seed: u64) -> Result<SpectralField> {
        match &self.rho0 {
            InitialScalar::SingleMode(m) => single_mode(&self.scalar_grid, *m),
            InitialScalar::Annulus(m0) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(SCALAR_STREAM);
                annulus(&self.scalar_grid, *m0, &mut rng)
            }
            InitialScalar::Field(f) => {
                if !f.grid().same_as(&self.scalar_grid) {
                    return Err(Error::GridMismatch);
                }
                Ok(f.clone())
            }
        }
    }

    pub fn noise_model(&self, seed: u64) -> Result<NoiseModel> {
        NoiseModel::new(&self.flow_grid, self.alpha, self.sigma, seed)
    }

    pub fn initial_flow(&self, model: &NoiseModel, seed: u64) -> Result<FlowState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(VELOCITY_STREAM);
        let w = match &self.u0 {
            InitialVelocity::Zero => return Ok(FlowState::zero(&self.flow_grid)),
            InitialVelocity::Stationary => model.vorticity_from(&sample_stationary_ou(model, &mut rng)),
            InitialVelocity::PowerLaw(s) => power_law(&self.flow_grid, *s, &mut rng),
            InitialVelocity::Field(w) => w.resample(&self.flow_grid),
        };
        Ok(FlowState::new(w, 0.0))
    }
}

/// One row of the time-series output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub log_amp: f64,
    pub lambda_inst: f64,
    pub fk_grad: f64,
    pub fk_stretch: f64,
    pub median: u64,
    pub quantile2: u64,
    pub filament: f64,
    pub u_l2: f64,
    pub u_h1: f64,
}

/// Flow, noise and scalar advanced together. The scalar sees the flow's
/// velocity frozen at the start of each (sub)step.
#[derive(Clone, Debug)]
pub struct Coupled<S> {
    flow: FlowState,
    noise: S,
    scalar: ScalarState,
    scheme: ScalarScheme,
    c_cfl: f64,
    fk: FkAccumulator,
}

impl<S: NoiseSource> Coupled<S> {
    pub fn new(flow: FlowState, noise: S, scalar: ScalarState, scheme: ScalarScheme, c_cfl: f64) -> Result<Self> {
        if !noise.model().grid().same_as(flow.grid()) {
            return Err(Error::GridMismatch);
        }
        if flow.grid().cutoff() > scalar.pi().grid().cutoff() {
            return Err(Error::InvalidParameter("flow grid must not resolve more modes than the scalar grid".into()));
        }
        Ok(Self { flow, noise, scalar, scheme, c_cfl, fk: FkAccumulator::default() })
    }

    pub fn flow(&self) -> &FlowState {
        &self.flow
    }

    pub fn scalar(&self) -> &ScalarState {
        &self.scalar
    }

    pub fn noise(&self) -> &S {
        &self.noise
    }

    pub fn fk(&self) -> &FkAccumulator {
        &self.fk
    }

    /// Current velocity on the scalar grid.
    pub fn velocity(&self) -> PreparedVelocity {
        let u = self.flow.velocity().resample(self.scalar.pi().grid());
        PreparedVelocity::new(&u, self.scalar.kind())
    }

    /// Advances the flow alone by `duration` in steps of at most `dt`.
    pub fn burn_in(&mut self, duration: f64, dt: f64) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let n = (duration / dt).ceil().max(1.0) as u64;
        let h = duration / n as f64;
        for _ in 0..n {
            let mut left = h;
            while left > 0.0 {
                let pieces = (left / self.flow.cfl_limit(self.c_cfl)).ceil().max(1.0);
                let hs = left / pieces;
                self.flow = sns_step(&self.flow, &mut self.noise, hs, self.c_cfl)?;
                left = if pieces <= 1.0 { 0.0 } else { left - hs };
            }
        }
        Ok(())
    }

    /// One macro step of length `h`, split into equal substeps whenever the
    /// flow or scalar CFL limit requires it.
    pub fn step(&mut self, h: f64) -> Result<()> {
        let mut left = h;
        while left > 0.0 {
            let u = self.velocity();
            let limit = self.flow.cfl_limit(self.c_cfl).min(self.scalar.cfl_limit(&u, self.c_cfl));
            let pieces = (left / limit).ceil().max(1.0);
            let hs = left / pieces;
            let next = advance_scalar(self.scheme, &self.scalar, &u, hs, self.c_cfl)?;
            self.fk.record(&self.scalar, &next, &u)?;
            self.scalar = next;
            self.flow = sns_step(&self.flow, &mut self.noise, hs, self.c_cfl)?;
            left = if pieces <= 1.0 { 0.0 } else { left - hs };
        }
        Ok(())
    }

    pub fn sample(&self) -> Result<Sample> {
        let u = self.velocity();
        let pi = self.scalar.pi();
        let v = self.flow.velocity();
        Ok(Sample {
            t: self.scalar.time(),
            log_amp: self.scalar.log_amp(),
            lambda_inst: log_derivative(pi, &u, self.scalar.kappa())?,
            fk_grad: self.fk.int_grad,
            fk_stretch: self.fk.int_stretch,
            median: spectral_median(pi)?,
            quantile2: spectral_quantile(pi, 2.0)?,
            filament: filament_scale(pi)?,
            u_l2: v.norm(),
            u_h1: vector_sobolev_norm(v, 1.0),
        })
    }
}

/// Sparse coefficient list used to persist fields exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeList {
    pub n: usize,
    pub modes: Vec<(i64, i64, f64, f64)>,
}

impl ModeList {
    pub fn from_field(f: &SpectralField) -> Self {
        let modes = f.modes().filter(|(_, c)| c.norm_sqr() > 0.0).map(|(k, c)| (k.k1, k.k2, c.re, c.im)).collect();
        Self { n: f.grid().n(), modes }
    }

    pub fn to_field(&self, grid: &Arc<WaveGrid>) -> Result<SpectralField> {
        if grid.n() != self.n {
            return Err(Error::GridMismatch);
        }
        let mut f = SpectralField::zeros(grid);
        for &(k1, k2, re, im) in &self.modes {
            let k = Wavenumber::new(k1, k2);
            let idx = grid.index_of(k).ok_or(Error::InactiveMode(k1, k2))?;
            f.set_index(idx, num_complex::Complex64::new(re, im));
        }
        Ok(f)
    }
}

/// Everything needed to continue a run bit for bit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub step: u64,
    pub flow_w: ModeList,
    pub flow_t: f64,
    pub scalar_pi: ModeList,
    pub log_amp: f64,
    pub scalar_t: f64,
    pub rng: ChaCha8Rng,
    pub fk: FkAccumulator,
    pub times: Vec<f64>,
    pub log_amps: Vec<f64>,
    pub filament_sum: f64,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub lambda: Option<LambdaEstimate>,
    pub fk: FkAccumulator,
    pub final_median: u64,
    pub mean_filament: f64,
    pub steps: u64,
}

/// A seeded run of [`RunSpec`], advanced one macro step at a time.
#[derive(Clone, Debug)]
pub struct RunState {
    seed: u64,
    step: u64,
    sim: Coupled<RngNoise>,
    times: Vec<f64>,
    log_amps: Vec<f64>,
    filament_sum: f64,
    samples: u64,
}

impl RunState {
    /// Builds the initial state and burns the flow in.
    pub fn start(spec: &RunSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let model = spec.noise_model(seed)?;
        let flow = spec.initial_flow(&model, seed)?;
        let scalar = ScalarState::new(&spec.initial_scalar(seed)?, spec.kind, spec.kappa)?;
        let mut sim = Coupled::new(flow, RngNoise::new(model), scalar, spec.scheme, spec.c_cfl)?;
        sim.burn_in(spec.t_burn, spec.dt)?;
        Ok(Self { seed, step: 0, sim, times: Vec::new(), log_amps: Vec::new(), filament_sum: 0.0, samples: 0 })
    }

    pub fn resume(spec: &RunSpec, cp: &Checkpoint) -> Result<Self> {
        spec.validate()?;
        let model = spec.noise_model(cp.seed)?;
        let flow = FlowState::new(cp.flow_w.to_field(&spec.flow_grid)?, cp.flow_t);
        let pi = cp.scalar_pi.to_field(&spec.scalar_grid)?;
        let scalar = ScalarState::from_parts(pi, cp.log_amp, cp.scalar_t, spec.kind, spec.kappa)?;
        let mut sim = Coupled::new(flow, RngNoise::with_rng(model, cp.rng.clone()), scalar, spec.scheme, spec.c_cfl)?;
        sim.fk = cp.fk.clone();
        Ok(Self {
            seed: cp.seed,
            step: cp.step,
            sim,
            times: cp.times.clone(),
            log_amps: cp.log_amps.clone(),
            filament_sum: cp.filament_sum,
            samples: cp.samples,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            seed: self.seed,
            step: self.step,
            flow_w: ModeList::from_field(self.sim.flow.vorticity()),
            flow_t: self.sim.flow.time(),
            scalar_pi: ModeList::from_field(self.sim.scalar.pi()),
            log_amp: self.sim.scalar.log_amp(),
            scalar_t: self.sim.scalar.time(),
            rng: self.sim.noise.rng().clone(),
            fk: self.sim.fk.clone(),
            times: self.times.clone(),
            log_amps: self.log_amps.clone(),
            filament_sum: self.filament_sum,
            samples: self.samples,
        }
    }

    pub fn sim(&self) -> &Coupled<RngNoise> {
        &self.sim
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self, spec: &RunSpec) -> bool {
        self.step > spec.steps()
    }

    /// Emits the sample due at the current step (if any) and then advances
    /// one macro step. Returns `false` once the run is complete.
    pub fn advance(&mut self, spec: &RunSpec, mut on_sample: impl FnMut(&Sample) -> Result<()>) -> Result<bool> {
        let total = spec.steps();
        if self.step > total {
            return Ok(false);
        }
        if self.step % spec.record_every == 0 || self.step == total {
            let s = self.sim.sample()?;
            self.times.push(s.t);
            self.log_amps.push(s.log_amp);
            self.filament_sum += s.filament;
            self.samples += 1;
            on_sample(&s)?;
        }
        if self.step < total {
            self.sim.step(spec.step_size())?;
        }
        self.step += 1;
        Ok(self.step <= total)
    }

    pub fn summary(&self) -> Result<RunSummary> {
        Ok(RunSummary {
            seed: self.seed,
            lambda: estimate_lambda(&self.times, &self.log_amps, 0.0).ok(),
            fk: self.sim.fk.clone(),
            final_median: spectral_median(self.sim.scalar.pi())?,
            mean_filament: if self.samples == 0 { f64::NAN } else { self.filament_sum / self.samples as f64 },
            steps: self.step.saturating_sub(1),
        })
    }
}

/// Runs `spec` to completion, feeding every sample to `on_sample`.
pub fn run(spec: &RunSpec, seed: u64, mut on_sample: impl FnMut(&Sample) -> Result<()>) -> Result<RunSummary> {
    let mut state = RunState::start(spec, seed)?;
    while state.advance(spec, &mut on_sample)? {}
    state.summary()
}

/// Result of one stopping experiment, with the median trace and the median
/// at the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingOutcome {
    pub seed: u64,
    pub record: StoppingRecord,
    pub trace: MedianTrace,
    pub median_at_horizon: u64,
}

/// Runs the coupled system for `spec.t_total` from an initial scalar with
/// `M(ϱ₀) = M0`, evaluating the staged stopping times online.
pub fn run_stopping_experiment(spec: &RunSpec, stop: StoppingSpec, seed: u64, trace_every: u64) -> Result<StoppingOutcome> {
    stop.validate()?;
    let limit = (spec.scalar_grid.cutoff() / 2) as u64;
    if stop.m0 > limit {
        return Err(Error::Resolution { m0: stop.m0, limit });
    }
    let rho0 = spec.initial_scalar(seed)?;
    let m = spectral_median(&rho0)?;
    if m != stop.m0 {
        return Err(Error::MedianPrecondition { got: m, expected: stop.m0 });
    }
    let mut state = RunState::start(spec, seed)?;
    let mut tracker = StoppingTracker::new(stop)?;
    let mut trace = MedianTrace::default();
    let total = spec.steps();
    let h = spec.step_size();
    let trace_every = trace_every.max(1);
    let mut last = stop.m0;
    for step in 0..=total {
        let sim = state.sim();
        let pi = sim.scalar().pi();
        let (med, q2) = (spectral_median(pi)?, spectral_quantile(pi, 2.0)?);
        tracker.observe(sim.scalar().time(), med, q2);
        if step % trace_every == 0 || step == total {
            trace.times.push(sim.scalar().time());
            trace.median.push(med);
            trace.quantile2.push(q2);
            trace.filament.push(filament_scale(pi)?);
        }
        last = med;
        if step < total {
            state.sim.step(h)?;
        }
    }
    Ok(StoppingOutcome { seed, record: tracker.record(), trace, median_at_horizon: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DealiasFraction;

    fn spec(n: usize, sigma: f64, rho0: InitialScalar) -> RunSpec {
        let g = WaveGrid::new(n, DealiasFraction::TWO_THIRDS).unwrap();
        RunSpec {
            flow_grid: Arc::clone(&g),
            scalar_grid: g,
            alpha: 12.0,
            sigma,
            kappa: 0.1,
            kind: OperatorKind::Adv,
            scheme: ScalarScheme::Euler,
            dt: 0.01,
            t_burn: 0.0,
            t_total: 1.0,
            c_cfl: 0.5,
            u0: InitialVelocity::Zero,
            rho0,
            record_every: 5,
        }
    }

    #[test]
    fn pure_heat_control() {
        let s = spec(16, 0.0, InitialScalar::SingleMode(3));
        let mut rows = Vec::new();
        let sum = run(&s, 1, |r| {
            rows.push(r.clone());
            Ok(())
        })
        .unwrap();
        let lam = sum.lambda.unwrap();
        assert!((lam.lambda + 0.9).abs() < 1e-10);
        assert!(lam.stderr < 1e-10);
        assert!(sum.fk.residual().abs() < 1e-10);
        assert_eq!(rows.len(), 21);
        assert!(rows.iter().all(|r| r.median == 3 && r.u_l2 == 0.0));
        assert!((rows[20].t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let mut s = spec(16, 1.0, InitialScalar::Annulus(4));
        s.u0 = InitialVelocity::Stationary;
        s.t_burn = 0.1;
        let mut straight = Vec::new();
        run(&s, 3, |r| {
            straight.push(r.clone());
            Ok(())
        })
        .unwrap();
        let mut resumed = Vec::new();
        let mut st = RunState::start(&s, 3).unwrap();
        for _ in 0..37 {
            st.advance(&s, |r| {
                resumed.push(r.clone());
                Ok(())
            })
            .unwrap();
        }
        let text = serde_json::to_string(&st.checkpoint()).unwrap();
        let cp: Checkpoint = serde_json::from_str(&text).unwrap();
        let mut st = RunState::resume(&s, &cp).unwrap();
        while st
            .advance(&s, |r| {
                resumed.push(r.clone());
                Ok(())
            })
            .unwrap()
        {}
        assert_eq!(straight, resumed);
    }

    #[test]
    fn substeps_when_the_flow_is_fast() {
        let mut s = spec(16, 20.0, InitialScalar::SingleMode(2));
        s.u0 = InitialVelocity::Stationary;
        s.dt = 0.2;
        let sum = run(&s, 5, |_| Ok(())).unwrap();
        assert!(sum.fk.n_samples > s.steps());
    }

    #[test]
    fn stopping_guards() {
        let s = spec(32, 0.0, InitialScalar::Annulus(8));
        let stop = StoppingSpec { m0: 8, kappa: 0.1, alpha: 12.0, delta: 0.2, q: 2.5 };
        assert!(matches!(run_stopping_experiment(&s, stop, 1, 1), Err(Error::Resolution { .. })));
        let s = spec(32, 0.0, InitialScalar::Annulus(4));
        let stop = StoppingSpec { m0: 5, ..stop };
        assert!(matches!(run_stopping_experiment(&s, stop, 1, 1), Err(Error::MedianPrecondition { got: 4, expected: 5 })));
    }

    #[test]
    fn heat_only_median_never_moves() {
        let mut s = spec(32, 0.0, InitialScalar::SingleMode(4));
        s.t_total = 2.0;
        let stop = StoppingSpec { m0: 4, kappa: 0.1, alpha: 12.0, delta: 0.2, q: 2.5 };
        let out = run_stopping_experiment(&s, stop, 1, 10).unwrap();
        assert!(out.record.tau.is_infinite() && !out.record.hit_within_tstar);
        assert!(out.trace.median.iter().all(|&m| m == 4));
        assert_eq!(out.median_at_horizon, 4);
        assert!(out.record.eta <= out.record.eta_cap);
    }
}

