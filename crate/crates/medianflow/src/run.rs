//! `run`: seeded coupled simulations with time-series output, periodic
//! checkpoints and exact resume.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Instant;

use medianflow_core::simulation::{Checkpoint, RunSpec, RunState, RunSummary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Kind};
use crate::error::{CliError, CliResult};
use crate::output::{create_dir, ensemble_seeds, read_json, write_json, write_mfld, Document, RunPaths, RunRecord, SampleRow};
use crate::Options;

/// Checkpoint file. Not a flattened [`Document`]: the generator state holds
/// a `u128`, which flattening cannot buffer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub checkpoint: Checkpoint,
}

impl CheckpointFile {
    pub fn new(config_hash: &str, checkpoint: Checkpoint) -> Self {
        Self { schema_version: crate::output::SCHEMA_VERSION, config_hash: config_hash.into(), checkpoint }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecordsBody {
    pub records: Vec<RunRecord>,
}

pub fn record_from(hash: &str, kappa: f64, s: &RunSummary, wall: f64) -> RunRecord {
    let t = s.fk.t_accum;
    let mean = |x: f64| if t > 0.0 { x / t } else { 0.0 };
    RunRecord {
        schema_version: crate::output::SCHEMA_VERSION,
        config_hash: hash.into(),
        seed: s.seed,
        kappa,
        lambda_hat: s.lambda.map(|l| l.lambda),
        lambda_stderr: s.lambda.map(|l| l.stderr),
        fk_grad_mean: mean(s.fk.int_grad),
        fk_stretch_mean: mean(s.fk.int_stretch),
        fk_residual: s.fk.residual(),
        final_median: s.final_median,
        mean_filament: s.mean_filament,
        steps: s.steps,
        wall_time_s: wall,
    }
}

/// Keeps the header and the first `rows` data lines of a CSV file.
fn truncate_csv(path: &Path, rows: u64) -> CliResult<()> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut kept = Vec::new();
    for line in BufReader::new(file).lines().take(rows as usize + 1) {
        kept.extend_from_slice(line.map_err(|e| CliError::io(path, e))?.as_bytes());
        kept.push(b'\n');
    }
    fs::write(path, kept).map_err(|e| CliError::io(path, e))
}

/// Runs one seed, writing its time series, checkpoints and final snapshots.
pub fn run_seed(exp: &Experiment, spec: &RunSpec, seed: u64, dir: &Path, resume: bool) -> CliResult<RunRecord> {
    let start = Instant::now();
    let hash = exp.hash();
    let paths = RunPaths::new(dir, seed);
    let every = exp.config.experiment.checkpoint_every;

    let resumed = if resume && paths.checkpoint.exists() {
        let doc: CheckpointFile = read_json(&paths.checkpoint)?;
        if doc.config_hash != hash {
            return Err(CliError::Usage(format!(
                "{} was written by a different config ({})",
                paths.checkpoint.display(),
                doc.config_hash
            )));
        }
        Some(doc.checkpoint)
    } else {
        None
    };
    let (mut state, file) = match resumed {
        Some(cp) => {
            truncate_csv(&paths.timeseries, cp.samples)?;
            let f = fs::OpenOptions::new().append(true).open(&paths.timeseries).map_err(|e| CliError::io(&paths.timeseries, e))?;
            (RunState::resume(spec, &cp)?, f)
        }
        None => {
            let f = fs::File::create(&paths.timeseries).map_err(|e| CliError::io(&paths.timeseries, e))?;
            (RunState::start(spec, seed)?, f)
        }
    };
    let has_header = state.step_index() > 0;
    let mut csv = csv::WriterBuilder::new().has_headers(!has_header).from_writer(std::io::BufWriter::new(file));

    let save = |cp: Checkpoint| write_json(&paths.checkpoint, &CheckpointFile::new(&hash, cp));
    let mut last_good = state.checkpoint();
    loop {
        let step = state.step_index();
        if every > 0 && step > 0 && step % every == 0 {
            csv.flush().map_err(|e| CliError::io(&paths.timeseries, e))?;
            save(state.checkpoint())?;
        }
        if step % spec.record_every == 0 {
            last_good = state.checkpoint();
        }
        let mut row_err = None;
        let more = state.advance(spec, |s| {
            if let Err(e) = csv.serialize(SampleRow::from(s)) {
                row_err = Some(e);
            }
            Ok(())
        });
        if let Some(e) = row_err {
            return Err(e.into());
        }
        match more {
            Ok(true) => {}
            Ok(false) => break,
            Err(source) => {
                csv.flush().map_err(|e| CliError::io(&paths.timeseries, e))?;
                save(last_good)?;
                return Err(CliError::Aborted { seed, source, checkpoint: paths.checkpoint.clone() });
            }
        }
    }
    csv.flush().map_err(|e| CliError::io(&paths.timeseries, e))?;
    if every > 0 {
        save(state.checkpoint())?;
    }
    write_mfld(&paths.scalar, state.sim().scalar().pi())?;
    write_mfld(&paths.vorticity, state.sim().flow().vorticity())?;
    let summary = state.summary()?;
    Ok(record_from(&hash, spec.kappa, &summary, start.elapsed().as_secs_f64()))
}

pub fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))
}

pub fn run_command(exp: &Experiment, opts: &Options) -> CliResult<Vec<RunRecord>> {
    exp.check_kind(Kind::Run)?;
    if exp.kappas.len() != 1 {
        return Err(CliError::Usage("run takes a single scalar.kappa; use sweep for kappa_list".into()));
    }
    let spec = exp.run_spec(exp.kappas[0])?;
    let dir = opts.output_dir(exp);
    create_dir(&dir)?;
    let seeds = ensemble_seeds(opts.seed(exp), exp.config.experiment.ensemble_size);
    let pool = thread_pool(opts.threads)?;
    let results: Vec<CliResult<RunRecord>> =
        pool.install(|| seeds.par_iter().map(|&s| run_seed(exp, &spec, s, &dir, opts.resume)).collect());
    let records = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    write_json(&dir.join("records.json"), &Document::new(&exp.hash(), RecordsBody { records: records.clone() }))?;
    Ok(records)
}
