use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use medianflow::{chaos, median, run, sweep, verify, CliResult, Experiment, Options};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "medianflow", version, about = "Passive scalars in stochastically forced 2D flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seeded runs at one diffusivity, with time series and checkpoints.
    Run(ExpArgs),
    /// Ensembles over `scalar.kappa_list` with log-log fits.
    Sweep(ExpArgs),
    /// Stopping-time experiments for the spectral median.
    Median(ExpArgs),
    /// First-chaos variance, closed form against Monte Carlo.
    Chaos(ExpArgs),
    /// Invariant checks with pinned seeds; exits nonzero if any fails.
    Verify {
        /// Use the larger sample sizes of the acceptance suite.
        #[arg(long)]
        full: bool,
        #[arg(long, env = "MEDIANFLOW_THREADS", default_value_t = 1)]
        threads: usize,
    },
}

#[derive(Args)]
struct ExpArgs {
    config: PathBuf,
    /// Overrides `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `experiment.output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, env = "MEDIANFLOW_THREADS", default_value_t = 1)]
    threads: usize,
    /// Continue from existing checkpoints (`run` only).
    #[arg(long)]
    resume: bool,
}

impl ExpArgs {
    fn load(&self) -> CliResult<(Experiment, Options)> {
        let exp = Experiment::load(&self.config)?;
        let opts = Options { output_dir: self.output_dir.clone(), seed: self.seed, threads: self.threads, resume: self.resume };
        Ok((exp, opts))
    }
}

fn execute(cmd: Command) -> CliResult<bool> {
    match cmd {
        Command::Run(a) => {
            let (exp, opts) = a.load()?;
            for r in run::run_command(&exp, &opts)? {
                let lam = r.lambda_hat.map_or("n/a".into(), |l| format!("{l:.6}"));
                println!("seed {:>20}  lambda_hat {lam}  median {}  steps {}", r.seed, r.final_median, r.steps);
            }
            println!("wrote {}", opts.output_dir(&exp).display());
        }
        Command::Sweep(a) => {
            let (exp, opts) = a.load()?;
            let body = sweep::sweep_command(&exp, &opts)?;
            for r in &body.rows {
                println!("kappa {:<10} lambda_hat {:.6} +- {:.2e}  filament {:.4}", r.kappa, r.lambda_hat, r.stderr, r.mean_filament);
            }
            if let Some(f) = &body.filament_fit {
                println!("filament slope {:.4} +- {:.4}", f.slope, f.stderr);
            }
            if let Some(f) = &body.lambda_fit {
                println!("lambda slope   {:.4} +- {:.4}", f.slope, f.stderr);
            }
            for n in &body.notes {
                println!("note: {n}");
            }
        }
        Command::Median(a) => {
            let (exp, opts) = a.load()?;
            for l in median::median_command(&exp, &opts)?.levels {
                println!(
                    "M0 {:<4} hits {}/{}  p {:.3} [{:.3}, {:.3}]  eta within cap: {}",
                    l.m0, l.hits, l.runs, l.hit_probability, l.wilson_low, l.wilson_high, l.eta_within_cap
                );
            }
        }
        Command::Chaos(a) => {
            let (exp, opts) = a.load()?;
            for r in chaos::chaos_command(&exp, &opts)?.rows.iter().filter(|r| r.ell == "total") {
                println!(
                    "kappa {:<8} M {:<6} closed {:.6e}  mc {:.6e} +- {:.2e}  ratio {:.4e}",
                    r.kappa, r.m, r.var_closed, r.var_mc, r.mc_stderr, r.ratio_lower_bound
                );
            }
        }
        Command::Verify { full, threads } => {
            let pool = run::thread_pool(threads)?;
            let checks = pool.install(|| verify::suite(full));
            let failed = checks.iter().filter(|c| !c.passed()).count();
            for c in &checks {
                println!("{c}");
            }
            println!("{} checks, {failed} failed", checks.len());
            return Ok(failed == 0);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
