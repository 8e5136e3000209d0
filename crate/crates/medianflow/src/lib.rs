//! Configuration, file formats and subcommands of the `medianflow` binary.

use std::path::PathBuf;

pub mod chaos;
pub mod config;
pub mod error;
pub mod median;
pub mod output;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{Config, Experiment, Kind};
pub use error::{CliError, CliResult};

/// Command-line overrides shared by the experiment subcommands.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub resume: bool,
}

impl Options {
    /// The `--output-dir` flag, else `experiment.output_dir` relative to the
    /// config file, else `out`.
    pub fn output_dir(&self, exp: &Experiment) -> PathBuf {
        match (&self.output_dir, &exp.config.experiment.output_dir) {
            (Some(d), _) => d.clone(),
            (None, Some(d)) => exp.resolve(d),
            (None, None) => PathBuf::from("out"),
        }
    }

    pub fn seed(&self, exp: &Experiment) -> u64 {
        self.seed.unwrap_or(exp.config.noise.seed)
    }
}
