//! `median`: staged stopping-time experiments from annulus data, with
//! hitting probabilities and Wilson intervals per level.

use medianflow_core::diagnostics::{t_star, wilson_interval, StoppingSpec};
use medianflow_core::simulation::{run_stopping_experiment, InitialScalar, StoppingOutcome};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Kind, ScalarInit};
use crate::error::{CliError, CliResult};
use crate::output::{create_dir, ensemble_seeds, write_csv, write_json, Document, SCHEMA_VERSION};
use crate::run::thread_pool;
use crate::Options;

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Stopping record of one seed. Times that were not reached are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRow {
    pub schema_version: u32,
    #[serde(rename = "M0")]
    pub m0: u64,
    pub kappa: f64,
    pub delta: f64,
    pub q: f64,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub eta: Option<f64>,
    pub i_fin: u64,
    pub hit_within_tstar: bool,
    pub seed: u64,
    pub eta_cap: f64,
    pub median_at_horizon: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub schema_version: u32,
    #[serde(rename = "M0")]
    pub m0: u64,
    pub seed: u64,
    pub t: f64,
    pub median: u64,
    pub quantile2: u64,
    pub filament: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    #[serde(rename = "M0")]
    pub m0: u64,
    pub t_star: f64,
    pub horizon: f64,
    pub runs: u64,
    pub hits: u64,
    pub hit_probability: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_eta: Option<f64>,
    pub max_eta: Option<f64>,
    pub eta_cap: f64,
    pub eta_within_cap: bool,
    pub mean_median_at_horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianBody {
    pub kappa: f64,
    pub sigma: f64,
    pub levels: Vec<LevelSummary>,
}

pub fn stopping_row(o: &StoppingOutcome, stop: &StoppingSpec) -> StoppingRow {
    StoppingRow {
        schema_version: SCHEMA_VERSION,
        m0: o.record.m0,
        kappa: stop.kappa,
        delta: stop.delta,
        q: stop.q,
        tau: finite(o.record.tau),
        sigma: finite(o.record.sigma),
        eta: finite(o.record.eta),
        i_fin: o.record.i_fin,
        hit_within_tstar: o.record.hit_within_tstar,
        seed: o.seed,
        eta_cap: o.record.eta_cap,
        median_at_horizon: o.median_at_horizon,
    }
}

pub fn summarize_level(m0: u64, t_star: f64, horizon: f64, rows: &[&StoppingRow]) -> LevelSummary {
    let runs = rows.len() as u64;
    let hits = rows.iter().filter(|r| r.hit_within_tstar).count() as u64;
    let (wilson_low, wilson_high) = wilson_interval(hits, runs, WILSON_Z);
    let etas: Vec<f64> = rows.iter().filter_map(|r| r.eta).collect();
    let eta_cap = rows.first().map_or(f64::NAN, |r| r.eta_cap);
    LevelSummary {
        m0,
        t_star,
        horizon,
        runs,
        hits,
        hit_probability: hits as f64 / runs as f64,
        wilson_low,
        wilson_high,
        mean_eta: (!etas.is_empty()).then(|| etas.iter().sum::<f64>() / etas.len() as f64),
        max_eta: etas.iter().copied().reduce(f64::max),
        eta_cap,
        eta_within_cap: etas.iter().all(|&e| e <= eta_cap),
        mean_median_at_horizon: rows.iter().map(|r| r.median_at_horizon as f64).sum::<f64>() / runs as f64,
    }
}

pub fn median_command(exp: &Experiment, opts: &Options) -> CliResult<MedianBody> {
    exp.check_kind(Kind::Median)?;
    if exp.kappas.len() != 1 {
        return Err(CliError::Usage("median takes a single scalar.kappa".into()));
    }
    let kappa = exp.kappas[0];
    let e = &exp.config.experiment;
    let levels = match (&e.m0_list, &exp.rho0) {
        (Some(list), _) => list.clone(),
        (None, ScalarInit::Annulus(m)) => vec![*m],
        (None, _) => {
            return Err(CliError::Usage("median needs experiment.m0_list or scalar.rho0 = \"annulus:<M0>\"".into()))
        }
    };
    let alpha = exp.config.noise.alpha;
    let mut jobs = Vec::new();
    for &m0 in &levels {
        let mut spec = exp.run_spec(kappa)?;
        spec.rho0 = InitialScalar::Annulus(m0);
        let stop = StoppingSpec { m0, kappa, alpha, delta: e.delta, q: e.q };
        stop.validate()?;
        let limit = (spec.scalar_grid.cutoff() / 2) as u64;
        if m0 > limit {
            return Err(medianflow_core::Error::Resolution { m0, limit }.into());
        }
        for seed in ensemble_seeds(opts.seed(exp), e.ensemble_size) {
            jobs.push((spec.clone(), stop, seed));
        }
    }
    let pool = thread_pool(opts.threads)?;
    let trace_every = e.trace_every;
    let outcomes: Vec<CliResult<(StoppingOutcome, StoppingSpec)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(spec, stop, seed)| Ok((run_stopping_experiment(spec, *stop, *seed, trace_every)?, *stop)))
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<CliResult<Vec<_>>>()?;

    let rows: Vec<StoppingRow> = outcomes.iter().map(|(o, s)| stopping_row(o, s)).collect();
    let mut traces = Vec::new();
    for (o, _) in &outcomes {
        for i in 0..o.trace.len() {
            traces.push(TraceRow {
                schema_version: SCHEMA_VERSION,
                m0: o.record.m0,
                seed: o.seed,
                t: o.trace.times[i],
                median: o.trace.median[i],
                quantile2: o.trace.quantile2[i],
                filament: o.trace.filament[i],
            });
        }
    }
    let horizon = exp.config.flow.t_total;
    let summaries = levels
        .iter()
        .map(|&m0| {
            let ts = t_star(kappa, m0 as f64, alpha).unwrap_or(f64::NAN);
            summarize_level(m0, ts, horizon, &rows.iter().filter(|r| r.m0 == m0).collect::<Vec<_>>())
        })
        .collect();

    let dir = opts.output_dir(exp);
    create_dir(&dir)?;
    let hash = exp.hash();
    #[derive(Serialize)]
    struct Records<'a> {
        records: &'a [StoppingRow],
    }
    write_json(&dir.join("stopping_records.json"), &Document::new(&hash, Records { records: &rows }))?;
    write_csv(&dir.join("median_traces.csv"), &traces)?;
    let body = MedianBody { kappa, sigma: exp.config.noise.sigma, levels: summaries };
    write_json(&dir.join("median_summary.json"), &Document::new(&hash, &body))?;
    Ok(body)
}
