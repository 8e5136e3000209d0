//! `chaos`: first-chaos variance at `t★`, closed form against Monte Carlo.

use medianflow_core::chaos::{chaos_mc_path, first_chaos_variance, lower_bound_ratio, summarize_paths, ChaosSpec, McSummary};
use medianflow_core::norms::spectral_median;
use medianflow_core::simulation::RunSpec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Kind};
use crate::error::{CliError, CliResult};
use crate::output::{create_dir, write_csv, write_json, Document, SCHEMA_VERSION};
use crate::run::thread_pool;
use crate::Options;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosRow {
    pub schema_version: u32,
    /// `"l1:l2"`, or `"total"` for the sum over the ℓ set.
    pub ell: String,
    pub kappa: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub t: f64,
    pub var_closed: f64,
    pub var_mc: f64,
    pub mc_stderr: f64,
    pub ratio_lower_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosBody {
    pub op: String,
    pub paths: u64,
    pub mc_dt: f64,
    pub k_max: i64,
    pub rows: Vec<ChaosRow>,
}

/// Monte Carlo over paths `0..paths`, in parallel; the reduction runs in
/// path order, so the result does not depend on the thread count.
pub fn parallel_monte_carlo(spec: &ChaosSpec, seed: u64, paths: u64, step: f64) -> CliResult<McSummary> {
    let coeffs = (0..paths)
        .into_par_iter()
        .map(|p| chaos_mc_path(spec, seed, p, step))
        .collect::<medianflow_core::Result<Vec<_>>>()?;
    Ok(summarize_paths(&spec.ell_set, &coeffs)?)
}

pub fn chaos_rows(spec: &ChaosSpec, m: f64, mc: &McSummary) -> CliResult<Vec<ChaosRow>> {
    let closed = first_chaos_variance(spec)?;
    let ratio = lower_bound_ratio(spec, m)?;
    let row = |ell: String, var_closed: f64, var_mc: f64, mc_stderr: f64| ChaosRow {
        schema_version: SCHEMA_VERSION,
        ell,
        kappa: spec.kappa,
        m,
        t: spec.t,
        var_closed,
        var_mc,
        mc_stderr,
        ratio_lower_bound: ratio,
    };
    let mut rows: Vec<ChaosRow> = closed
        .per_ell
        .iter()
        .zip(&mc.per_ell)
        .zip(&mc.per_ell_stderr)
        .map(|(((l, vc), (_, vm)), se)| row(format!("{}:{}", l.k1, l.k2), *vc, *vm, *se))
        .collect();
    rows.push(row("total".into(), closed.total, mc.total, mc.total_stderr));
    Ok(rows)
}

fn chaos_spec(exp: &Experiment, run: &RunSpec, kappa: f64, seed: u64) -> CliResult<(ChaosSpec, f64)> {
    let rho0 = run.initial_scalar(seed)?;
    let m = match exp.config.experiment.chaos_m {
        Some(m) => m,
        None => spectral_median(&rho0)? as f64,
    };
    let mut spec = ChaosSpec::at_t_star(&rho0, kappa, m, exp.op, exp.config.noise.alpha)?;
    spec.k_max = exp.config.experiment.k_max;
    spec.sigma = exp.config.noise.sigma;
    spec.validate()?;
    Ok((spec, m))
}

pub fn chaos_command(exp: &Experiment, opts: &Options) -> CliResult<ChaosBody> {
    exp.check_kind(Kind::Chaos)?;
    let e = &exp.config.experiment;
    let seed = opts.seed(exp);
    let pool = thread_pool(opts.threads)?;
    let mut rows = Vec::new();
    let mut kappas = exp.kappas.clone();
    kappas.sort_by(f64::total_cmp);
    for kappa in kappas {
        let run = exp.run_spec(kappa)?;
        let (spec, m) = chaos_spec(exp, &run, kappa, seed)?;
        if spec.sigma == 0.0 {
            return Err(CliError::Usage("chaos needs noise.sigma > 0".into()));
        }
        let mc = pool.install(|| parallel_monte_carlo(&spec, seed, e.paths, e.mc_dt))?;
        rows.extend(chaos_rows(&spec, m, &mc)?);
    }
    let dir = opts.output_dir(exp);
    create_dir(&dir)?;
    write_csv(&dir.join("chaos.csv"), &rows)?;
    let body = ChaosBody { op: exp.op.to_string(), paths: e.paths, mc_dt: e.mc_dt, k_max: e.k_max, rows };
    write_json(&dir.join("chaos_summary.json"), &Document::new(&exp.hash(), &body))?;
    Ok(body)
}
