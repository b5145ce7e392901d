//! Command line, config files and their merge into a resolved run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{invalid, CliError, Result, DEFAULT_OUT, DEFAULT_SEED, THREADS_ENV};

/// Batch runner for localization, obstruction and nodal experiments on integrable billiards.
#[derive(Debug, Parser)]
#[command(name = "billiard-lens", version, about)]
pub struct Cli {
    /// JSON experiment config; command-line values override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for the JSON report and CSV tables.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (falls back to BILLIARD_LENS_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random draw; recorded in the report.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Experiment config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Subcommands with their per-command overrides.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Command {
    /// Enumerate lattice shells and their angular discrepancy.
    Shell(ShellArgs),
    /// Shell kernel against the Bessel limit.
    Kernel(KernelArgs),
    /// Localization error statistics over a base-point grid.
    Localize(LocalizeArgs),
    /// Fixed-point localization at a rational base point.
    Fixed(FixedArgs),
    /// Localization on the four-cell lattice polygon.
    LatticePolygon(LatticePolygonArgs),
    /// Jet-variety contrast for an irrational rectangle.
    ObstructRect(ObstructRectArgs),
    /// Radial eliminant contrast for disk eigenfunctions.
    ObstructDisk(ObstructDiskArgs),
    /// Plane-wave span test for the Robin square.
    ObstructRobin(ObstructRobinArgs),
    /// Robin frequencies with bracket and residual checks.
    RobinFreqs(RobinFreqsArgs),
    /// Nodal domains, contours and nesting trees of a localized field.
    Nodal(NodalArgs),
    /// Empirical covariance of derandomized eigenfunctions.
    Covariance(CovarianceArgs),
    /// Genus of the translation surface of a rational polygon.
    Genus(GenusArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Shell(_) => "shell",
            Command::Kernel(_) => "kernel",
            Command::Localize(_) => "localize",
            Command::Fixed(_) => "fixed",
            Command::LatticePolygon(_) => "lattice-polygon",
            Command::ObstructRect(_) => "obstruct-rect",
            Command::ObstructDisk(_) => "obstruct-disk",
            Command::ObstructRobin(_) => "obstruct-robin",
            Command::RobinFreqs(_) => "robin-freqs",
            Command::Nodal(_) => "nodal",
            Command::Covariance(_) => "covariance",
            Command::Genus(_) => "genus",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ShellArgs {
    /// Integer diagonal form coefficients.
    #[arg(long, value_delimiter = ',')]
    pub form: Option<Vec<i64>>,
    /// Shell values.
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct KernelArgs {
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<i64>>,
    /// Window radius.
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    /// Grid nodes per half axis.
    #[arg(long)]
    pub half_nodes: Option<usize>,
    /// Billiard whose shells and kernel are used: square, iso, equi or hemi.
    #[arg(long)]
    pub billiard: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct LocalizeArgs {
    /// Localization job file; fields given here override it.
    #[arg(long)]
    pub job: Option<PathBuf>,
    /// Target wave file; defaults to the radial wave J0.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub billiard: Option<String>,
    #[arg(long)]
    pub bc: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<i64>>,
    /// Base grid resolution per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Derivative order of the window error.
    #[arg(long)]
    pub k: Option<usize>,
    /// Admissibility threshold; defaults to the median error at `epsilon-mu`.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub epsilon_mu: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FixedArgs {
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub bc: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<i64>>,
    /// Rational base point, e.g. 1/2,1/2.
    #[arg(long, value_delimiter = ',')]
    pub z0: Option<Vec<String>>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Parity tolerance.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct LatticePolygonArgs {
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub bc: Option<String>,
    #[arg(long)]
    pub mu: Option<i64>,
    /// Base points per cell.
    #[arg(long)]
    pub per_cell: Option<usize>,
    /// fixed or roaming.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Samples per shared edge for the continuity check.
    #[arg(long)]
    pub edge_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ObstructRectArgs {
    /// Eigenfunctions and waves drawn per family.
    #[arg(long)]
    pub count: Option<usize>,
    /// Largest lattice index of a drawn mode.
    #[arg(long)]
    pub max_index: Option<i64>,
    /// Residual ceiling for eigenfunction jets.
    #[arg(long)]
    pub ceiling: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ObstructDiskArgs {
    #[arg(long)]
    pub count: Option<usize>,
    /// Sample blocks per ray.
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Ray length.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Random blocks for the resultant cross-check.
    #[arg(long)]
    pub resultant_blocks: Option<usize>,
    #[arg(long)]
    pub ceiling: Option<f64>,
    #[arg(long)]
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ObstructRobinArgs {
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Mode indices (m, n) of the Robin eigenfunction.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub z0: Option<Vec<f64>>,
    /// Number of plane waves.
    #[arg(long)]
    pub waves: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RobinFreqsArgs {
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct NodalArgs {
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub billiard: Option<String>,
    #[arg(long)]
    pub bc: Option<String>,
    #[arg(long)]
    pub mu: Option<i64>,
    #[arg(long, value_delimiter = ',')]
    pub z0: Option<Vec<f64>>,
    /// Half width of the sampled square.
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Newton steps polishing contour vertices.
    #[arg(long)]
    pub polish: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CovarianceArgs {
    #[arg(long)]
    pub bc: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<i64>>,
    /// Base grid resolution per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenusArgs {
    /// Angles as multiples of pi, e.g. 1/2,1/2,1/2,1/2.
    #[arg(long, value_delimiter = ',')]
    pub angles: Option<Vec<String>>,
}

/// A fully merged run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub command: Command,
    pub out: PathBuf,
    pub threads: usize,
    pub seed: u64,
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Reads and parses a JSON file into `T`.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_value(read_json(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Copies every non-null entry of `over` onto `base`.
fn overlay(base: &mut Value, over: Value) {
    if base.is_null() {
        *base = Value::Object(Default::default());
    }
    if let (Value::Object(b), Value::Object(o)) = (base, over) {
        for (k, v) in o {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
}

fn parse_threads(raw: &str) -> Result<usize> {
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(invalid(format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))),
    }
}

impl Cli {
    /// Merges command line, config file and environment into one run.
    pub fn resolve(self, env_threads: Option<String>) -> Result<Resolved> {
        let config: Option<ExperimentConfig> = match &self.config {
            Some(path) => Some(
                serde_json::from_value(read_json(path)?)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?,
            ),
            None => None,
        };
        let command = match (config.as_ref(), self.command) {
            (None, None) => return Err(invalid("no command given")),
            (None, Some(c)) => c,
            (Some(cfg), cli) => {
                let mut tagged = serde_json::json!({ "command": cfg.command, "params": cfg.params.clone() });
                if let Some(c) = cli {
                    if c.name() != cfg.command {
                        return Err(invalid(format!("config command '{}' conflicts with '{}'", cfg.command, c.name())));
                    }
                    let over = serde_json::to_value(&c).expect("commands serialize");
                    overlay(&mut tagged["params"], over["params"].clone());
                }
                if tagged["params"].is_null() {
                    tagged["params"] = Value::Object(Default::default());
                }
                serde_json::from_value(tagged).map_err(|e| invalid(format!("config: {e}")))?
            }
        };
        let threads = match self.threads.or(config.as_ref().and_then(|c| c.threads)) {
            Some(0) => return Err(invalid("thread count must be positive")),
            Some(n) => n,
            None => match env_threads {
                Some(raw) => parse_threads(&raw)?,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            },
        };
        let out = self
            .out
            .or(config.as_ref().and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let seed = self.seed.or(config.as_ref().and_then(|c| c.seed)).unwrap_or(DEFAULT_SEED);
        Ok(Resolved { command, out, threads, seed })
    }
}
