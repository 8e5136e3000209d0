//! Experiment configuration.
//!
//! A TOML file with the sections `grid`, `noise`, `flow`, `scalar` and
//! `experiment`. Unknown keys are rejected, and semantic checks report every
//! offending key by its dotted path.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use medianflow_core::scalar::{OperatorKind, ScalarScheme};
use medianflow_core::simulation::{InitialScalar, InitialVelocity, RunSpec};
use medianflow_core::snapshot::read_snapshot;
use medianflow_core::{DealiasFraction, WaveGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub noise: NoiseConfig,
    pub flow: FlowConfig,
    pub scalar: ScalarConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Scalar grid size.
    pub n: usize,
    #[serde(default = "default_dealias")]
    pub dealias: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Flow grid size; defaults to `grid.n`.
    #[serde(default)]
    pub n: Option<usize>,
    pub dt: f64,
    #[serde(default)]
    pub t_burn: f64,
    pub t_total: f64,
    /// `zero`, `stationary`, `random:<s>` or `file:<path>`.
    #[serde(default = "default_u0")]
    pub u0: String,
    #[serde(default = "default_c_cfl")]
    pub c_cfl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarConfig {
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub kappa_list: Option<Vec<f64>>,
    #[serde(default = "default_op")]
    pub op: String,
    /// `mode:<m>`, `annulus:<M0>` or `file:<path>`.
    pub rho0: String,
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default = "one")]
    pub ensemble_size: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Time-series sampling interval in steps.
    #[serde(default = "one")]
    pub record_every: u64,
    /// Checkpoint interval in steps; 0 disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Median levels for `median`; defaults to the annulus radius of `scalar.rho0`.
    #[serde(default)]
    pub m0_list: Option<Vec<u64>>,
    /// Median-trace sampling interval in steps.
    #[serde(default = "default_trace_every")]
    pub trace_every: u64,
    #[serde(default = "default_k_max")]
    pub k_max: i64,
    #[serde(default = "default_paths")]
    pub paths: u64,
    #[serde(default = "default_mc_dt")]
    pub mc_dt: f64,
    /// Frequency `M` in `t★(M)` for `chaos`; defaults to the median of `ϱ₀`.
    #[serde(default)]
    pub chaos_m: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            ensemble_size: 1,
            delta: default_delta(),
            q: default_q(),
            output_dir: None,
            record_every: 1,
            checkpoint_every: 0,
            m0_list: None,
            trace_every: default_trace_every(),
            k_max: default_k_max(),
            paths: default_paths(),
            mc_dt: default_mc_dt(),
            chaos_m: None,
        }
    }
}

fn default_dealias() -> String {
    "2/3".into()
}
fn default_u0() -> String {
    "stationary".into()
}
fn default_c_cfl() -> f64 {
    0.5
}
fn default_op() -> String {
    "adv".into()
}
fn default_scheme() -> String {
    "euler".into()
}
fn one() -> u64 {
    1
}
fn default_delta() -> f64 {
    0.2
}
fn default_q() -> f64 {
    2.5
}
fn default_trace_every() -> u64 {
    10
}
fn default_k_max() -> i64 {
    8
}
fn default_paths() -> u64 {
    2000
}
fn default_mc_dt() -> f64 {
    medianflow_core::chaos::DEFAULT_MC_STEP
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Run,
    Sweep,
    Median,
    Chaos,
    Verify,
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "run" => Ok(Self::Run),
            "sweep" => Ok(Self::Sweep),
            "median" => Ok(Self::Median),
            "chaos" => Ok(Self::Chaos),
            "verify" => Ok(Self::Verify),
            other => Err(format!("unknown kind '{other}', expected run, sweep, median, chaos or verify")),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Run => "run",
            Self::Sweep => "sweep",
            Self::Median => "median",
            Self::Chaos => "chaos",
            Self::Verify => "verify",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarInit {
    Mode(i64),
    Annulus(u64),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowInit {
    Zero,
    Stationary,
    Random(f64),
    File(PathBuf),
}

fn split_tagged(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((tag, rest)) => (tag.trim(), Some(rest.trim())),
        None => (s.trim(), None),
    }
}

impl FromStr for ScalarInit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match split_tagged(s) {
            ("mode", Some(m)) => m.parse().map(Self::Mode).map_err(|_| format!("bad mode '{m}'")),
            ("annulus", Some(m)) => m.parse().map(Self::Annulus).map_err(|_| format!("bad annulus radius '{m}'")),
            ("file", Some(p)) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
            _ => Err(format!("expected mode:<m>, annulus:<M0> or file:<path>, got '{s}'")),
        }
    }
}

impl FromStr for FlowInit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match split_tagged(s) {
            ("zero", None) => Ok(Self::Zero),
            ("stationary", None) => Ok(Self::Stationary),
            ("random", Some(x)) => match x.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Self::Random(v)),
                _ => Err(format!("bad spectral exponent '{x}'")),
            },
            ("file", Some(p)) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
            _ => Err(format!("expected zero, stationary, random:<s> or file:<path>, got '{s}'")),
        }
    }
}

/// One rejected key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// A checked configuration with every string option parsed.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: Config,
    /// Directory that relative `file:` paths are resolved against.
    pub base_dir: PathBuf,
    pub dealias: DealiasFraction,
    pub op: OperatorKind,
    pub scheme: ScalarScheme,
    pub rho0: ScalarInit,
    pub u0: FlowInit,
    pub kappas: Vec<f64>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::ConfigParse { path: String::new(), message: e.to_string() })?;
        serde_path_to_error::deserialize(de).map_err(|e| CliError::ConfigParse {
            path: e.path().to_string(),
            message: e.inner().message().trim().to_string(),
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&json))
    }

    /// Checks every key and collects all problems before failing.
    pub fn validate(self, base_dir: &Path) -> CliResult<Experiment> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| issues.push(Issue { key: key.into(), message });

        let dealias = self.grid.dealias.parse::<DealiasFraction>().map_err(|e| e.to_string());
        if let Err(m) = &dealias {
            bad("grid.dealias", m.clone());
        }
        for (key, n) in [("grid.n", Some(self.grid.n)), ("flow.n", self.flow.n)] {
            if let Some(n) = n {
                if n < 8 || n % 2 != 0 {
                    bad(key, format!("{n} must be even and at least 8"));
                }
            }
        }
        if !(self.noise.alpha > 10.0 && self.noise.alpha.is_finite()) {
            bad("noise.alpha", format!("{} must exceed 10", self.noise.alpha));
        }
        if !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            bad("noise.sigma", format!("{} must be non-negative", self.noise.sigma));
        }
        for (key, v) in [("flow.dt", self.flow.dt), ("flow.t_total", self.flow.t_total), ("flow.c_cfl", self.flow.c_cfl)] {
            if !(v > 0.0 && v.is_finite()) {
                bad(key, format!("{v} must be positive"));
            }
        }
        if !(self.flow.t_burn >= 0.0 && self.flow.t_burn.is_finite()) {
            bad("flow.t_burn", format!("{} must be non-negative", self.flow.t_burn));
        }
        let u0 = self.flow.u0.parse::<FlowInit>();
        if let Err(m) = &u0 {
            bad("flow.u0", m.clone());
        }

        let kappas = match (self.scalar.kappa, &self.scalar.kappa_list) {
            (Some(k), None) => vec![k],
            (None, Some(list)) if !list.is_empty() => list.clone(),
            (None, Some(_)) => {
                bad("scalar.kappa_list", "must not be empty".into());
                Vec::new()
            }
            (Some(_), Some(_)) => {
                bad("scalar.kappa", "give either kappa or kappa_list, not both".into());
                Vec::new()
            }
            (None, None) => {
                bad("scalar.kappa", "missing (or give kappa_list)".into());
                Vec::new()
            }
        };
        let key = if self.scalar.kappa_list.is_some() { "scalar.kappa_list" } else { "scalar.kappa" };
        for &k in &kappas {
            if !(k > 0.0 && k <= 1.0) {
                bad(key, format!("{k} must lie in (0, 1]"));
            }
        }
        let op = self.scalar.op.parse::<OperatorKind>().map_err(|e| e.to_string());
        if let Err(m) = &op {
            bad("scalar.op", m.clone());
        }
        let scheme = self.scalar.scheme.parse::<ScalarScheme>().map_err(|e| e.to_string());
        if let Err(m) = &scheme {
            bad("scalar.scheme", m.clone());
        }
        let rho0 = self.scalar.rho0.parse::<ScalarInit>();
        if let Err(m) = &rho0 {
            bad("scalar.rho0", m.clone());
        }

        let e = &self.experiment;
        if let Some(kind) = &e.kind {
            if let Err(m) = kind.parse::<Kind>() {
                bad("experiment.kind", m);
            }
        }
        if e.ensemble_size == 0 {
            bad("experiment.ensemble_size", "must be at least 1".into());
        }
        if !(e.delta > 0.0 && e.delta < 0.25) {
            bad("experiment.delta", format!("{} must lie in (0, 1/4)", e.delta));
        }
        if !(e.q > 2.0 && e.q.is_finite()) {
            bad("experiment.q", format!("{} must exceed 2", e.q));
        }
        for (key, v) in [("experiment.record_every", e.record_every), ("experiment.trace_every", e.trace_every)] {
            if v == 0 {
                bad(key, "must be at least 1".into());
            }
        }
        if let Some(list) = &e.m0_list {
            if list.is_empty() || list.contains(&0) {
                bad("experiment.m0_list", "must be a non-empty list of positive integers".into());
            }
        }
        if e.k_max < 1 {
            bad("experiment.k_max", format!("{} must be at least 1", e.k_max));
        }
        if e.paths < 2 {
            bad("experiment.paths", format!("{} must be at least 2", e.paths));
        }
        if !(e.mc_dt > 0.0 && e.mc_dt.is_finite()) {
            bad("experiment.mc_dt", format!("{} must be positive", e.mc_dt));
        }
        if let Some(m) = e.chaos_m {
            if !(m >= 2.0 && m.is_finite()) {
                bad("experiment.chaos_m", format!("{m} must be at least 2"));
            }
        }

        if !issues.is_empty() {
            return Err(CliError::ConfigInvalid(issues));
        }
        Ok(Experiment {
            base_dir: base_dir.to_path_buf(),
            dealias: dealias.expect("checked"),
            op: op.expect("checked"),
            scheme: scheme.expect("checked"),
            rho0: rho0.expect("checked"),
            u0: u0.expect("checked"),
            kappas,
            config: self,
        })
    }
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::load(path)?.validate(&base)
    }

    /// The configured kind must agree with the command when it is given.
    pub fn check_kind(&self, command: Kind) -> CliResult<()> {
        match &self.config.experiment.kind {
            Some(k) if k.parse::<Kind>() != Ok(command) => Err(CliError::ConfigInvalid(vec![Issue {
                key: "experiment.kind".into(),
                message: format!("is '{k}' but the command is '{command}'"),
            }])),
            _ => Ok(()),
        }
    }

    pub fn hash(&self) -> String {
        self.config.hash()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn scalar_grid(&self) -> CliResult<Arc<WaveGrid>> {
        Ok(WaveGrid::new(self.config.grid.n, self.dealias)?)
    }

    pub fn flow_grid(&self) -> CliResult<Arc<WaveGrid>> {
        Ok(WaveGrid::new(self.config.flow.n.unwrap_or(self.config.grid.n), self.dealias)?)
    }

    fn read_field(&self, p: &Path) -> CliResult<medianflow_core::SpectralField> {
        let path = self.resolve(p);
        let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(read_snapshot(std::io::BufReader::new(file), self.dealias)?)
    }

    /// Builds the run description for one diffusivity.
    pub fn run_spec(&self, kappa: f64) -> CliResult<RunSpec> {
        let c = &self.config;
        let scalar_grid = self.scalar_grid()?;
        let rho0 = match &self.rho0 {
            ScalarInit::Mode(m) => InitialScalar::SingleMode(*m),
            ScalarInit::Annulus(m) => InitialScalar::Annulus(*m),
            ScalarInit::File(p) => {
                let f = self.read_field(p)?;
                if f.grid().n() != scalar_grid.n() {
                    return Err(CliError::ConfigInvalid(vec![Issue {
                        key: "scalar.rho0".into(),
                        message: format!("snapshot has n = {}, grid.n is {}", f.grid().n(), scalar_grid.n()),
                    }]));
                }
                InitialScalar::Field(f.resample(&scalar_grid))
            }
        };
        let u0 = match &self.u0 {
            FlowInit::Zero => InitialVelocity::Zero,
            FlowInit::Stationary => InitialVelocity::Stationary,
            FlowInit::Random(s) => InitialVelocity::PowerLaw(*s),
            FlowInit::File(p) => InitialVelocity::Field(self.read_field(p)?),
        };
        let spec = RunSpec {
            flow_grid: self.flow_grid()?,
            scalar_grid,
            alpha: c.noise.alpha,
            sigma: c.noise.sigma,
            kappa,
            kind: self.op,
            scheme: self.scheme,
            dt: c.flow.dt,
            t_burn: c.flow.t_burn,
            t_total: c.flow.t_total,
            c_cfl: c.flow.c_cfl,
            u0,
            rho0,
            record_every: c.experiment.record_every,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_values() {
        assert_eq!("annulus:16".parse::<ScalarInit>(), Ok(ScalarInit::Annulus(16)));
        assert_eq!("mode: 3".parse::<ScalarInit>(), Ok(ScalarInit::Mode(3)));
        assert_eq!("file:a.mfld".parse::<ScalarInit>(), Ok(ScalarInit::File("a.mfld".into())));
        assert!("annulus".parse::<ScalarInit>().is_err());
        assert!("ring:3".parse::<ScalarInit>().is_err());
        assert_eq!("zero".parse::<FlowInit>(), Ok(FlowInit::Zero));
        assert_eq!("random:2.5".parse::<FlowInit>(), Ok(FlowInit::Random(2.5)));
        assert!("random:x".parse::<FlowInit>().is_err());
        assert!("zero:1".parse::<FlowInit>().is_err());
    }
}
