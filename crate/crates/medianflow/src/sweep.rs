//! `sweep`: ensembles over a list of diffusivities, aggregated per κ, with
//! log-log fits of the filament scale and of `-λ̂` against κ.

use std::time::Instant;

use medianflow_core::diagnostics::linear_fit;
use medianflow_core::simulation::run;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Kind};
use crate::error::{CliError, CliResult};
use crate::output::{create_dir, ensemble_seeds, write_csv, write_json, Document, RunRecord, SCHEMA_VERSION};
use crate::run::{record_from, thread_pool};
use crate::Options;

/// Fits need at least this many distinct κ.
pub const MIN_FIT_POINTS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub schema_version: u32,
    pub kappa: f64,
    pub lambda_hat: f64,
    pub stderr: f64,
    pub mean_filament: f64,
    pub mean_median: f64,
    pub runs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepBody {
    pub rows: Vec<SweepRow>,
    /// `log ℓ̄` against `log κ`.
    pub filament_fit: Option<Fit>,
    /// `log(-λ̂)` against `log κ`, over rows with `λ̂ < 0`.
    pub lambda_fit: Option<Fit>,
    pub notes: Vec<String>,
    pub records: Vec<RunRecord>,
}

/// Least-squares line through `(log x, log y)`; refused below
/// [`MIN_FIT_POINTS`] points.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> CliResult<Fit> {
    if x.len() < MIN_FIT_POINTS {
        return Err(CliError::Usage(format!("a slope fit needs at least {MIN_FIT_POINTS} points, got {}", x.len())));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (slope, stderr, intercept) = linear_fit(&lx, &ly)?;
    Ok(Fit { slope, stderr, intercept, points: x.len() })
}

/// Mean over the ensemble; the standard error is the spread of the means,
/// or the batch-means error of the single run when the ensemble has one member.
pub fn aggregate(kappa: f64, records: &[&RunRecord]) -> SweepRow {
    let n = records.len() as f64;
    let lams: Vec<f64> = records.iter().map(|r| r.lambda_hat.unwrap_or(f64::NAN)).collect();
    let lambda_hat = lams.iter().sum::<f64>() / n;
    let stderr = if records.len() == 1 {
        records[0].lambda_stderr.unwrap_or(f64::NAN)
    } else {
        (lams.iter().map(|l| (l - lambda_hat).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
    };
    SweepRow {
        schema_version: SCHEMA_VERSION,
        kappa,
        lambda_hat,
        stderr,
        mean_filament: records.iter().map(|r| r.mean_filament).sum::<f64>() / n,
        mean_median: records.iter().map(|r| r.final_median as f64).sum::<f64>() / n,
        runs: records.len() as u64,
    }
}

pub fn sweep_command(exp: &Experiment, opts: &Options) -> CliResult<SweepBody> {
    exp.check_kind(Kind::Sweep)?;
    let mut kappas = exp.kappas.clone();
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    if kappas.len() < MIN_FIT_POINTS {
        return Err(CliError::Usage(format!(
            "sweep needs at least {MIN_FIT_POINTS} distinct values in scalar.kappa_list, got {}",
            kappas.len()
        )));
    }
    let specs = kappas.iter().map(|&k| exp.run_spec(k)).collect::<CliResult<Vec<_>>>()?;
    let seeds = ensemble_seeds(opts.seed(exp), exp.config.experiment.ensemble_size);
    let jobs: Vec<(usize, u64)> = (0..kappas.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let hash = exp.hash();
    let pool = thread_pool(opts.threads)?;
    let results: Vec<CliResult<RunRecord>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let start = Instant::now();
                let summary = run(&specs[i], seed, |_| Ok(()))?;
                Ok(record_from(&hash, kappas[i], &summary, start.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let records = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let rows: Vec<SweepRow> = kappas
        .iter()
        .map(|&k| aggregate(k, &records.iter().filter(|r| r.kappa == k).collect::<Vec<_>>()))
        .collect();
    let mut notes = Vec::new();
    let x: Vec<f64> = rows.iter().map(|r| r.kappa).collect();
    let fil: Vec<f64> = rows.iter().map(|r| r.mean_filament).collect();
    let filament_fit = match log_log_fit(&x, &fil) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("filament fit: {e}"));
            None
        }
    };
    let neg: Vec<&SweepRow> = rows.iter().filter(|r| r.lambda_hat < 0.0).collect();
    let lambda_fit = match log_log_fit(
        &neg.iter().map(|r| r.kappa).collect::<Vec<_>>(),
        &neg.iter().map(|r| -r.lambda_hat).collect::<Vec<_>>(),
    ) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("lambda fit over rows with negative exponent: {e}"));
            None
        }
    };

    let dir = opts.output_dir(exp);
    create_dir(&dir)?;
    write_csv(&dir.join("sweep.csv"), &rows)?;
    let body = SweepBody { rows, filament_fit, lambda_fit, notes, records };
    write_json(&dir.join("sweep_summary.json"), &Document::new(&hash, &body))?;
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_is_refused_below_four_points() {
        assert!(log_log_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
        let f = log_log_fit(&[1.0, 2.0, 4.0, 8.0], &[3.0, 12.0, 48.0, 192.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }
}
