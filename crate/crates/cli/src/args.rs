//! Command-line surface. Every subcommand except `simulate` also accepts
//! `--config <file.json>`: a JSON object keyed by the long flag names (with
//! underscores). Flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "graphkernel", version, about = "Kernel-based reconstruction of graph signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate or check graphs.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Kernel construction.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Estimate a signal from samples.
    #[command(subcommand)]
    Reconstruct(ReconstructCommand),
    /// Monte Carlo NMSE sweep from an experiment config.
    Simulate(SimulateArgs),
    /// Score estimates against a reference.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand, Debug)]
pub enum GraphCommand {
    /// Erdős–Rényi graph with unit weights.
    Gen(Configured<GraphGenArgs>),
    /// Load a graph and print a JSON summary.
    Validate(Configured<GraphValidateArgs>),
}

#[derive(Subcommand, Debug)]
pub enum KernelCommand {
    /// Laplacian kernel of a graph as a dense CSV matrix.
    Build(Configured<KernelBuildArgs>),
}

#[derive(Subcommand, Debug)]
pub enum ReconstructCommand {
    /// One observation set, static estimator.
    Static(Configured<StaticArgs>),
    /// Space-time KRR over the whole series.
    Batch(Configured<SeriesArgs>),
    /// Slot-by-slot filtering (ie, kkf, kekrikf, mkrikf).
    Online(Configured<SeriesArgs>),
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// NMSE of an estimate matrix against the truth (both n×T CSV).
    Nmse(Configured<NmseArgs>),
}

/// Subcommand flags plus an optional JSON file supplying defaults.
#[derive(Args, Debug)]
pub struct Configured<T: Args> {
    /// JSON object of flag values; command-line flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub args: T,
}

impl<T: Args + Serialize + DeserializeOwned> Configured<T> {
    pub fn resolve(self) -> Result<T> {
        match &self.config {
            None => Ok(self.args),
            Some(path) => merge(&self.args, path),
        }
    }
}

fn merge<T: Serialize + DeserializeOwned>(cli: &T, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut base: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Value::Object(base_map) = &mut base else {
        anyhow::bail!("{} must contain a JSON object", path.display());
    };
    if let Value::Object(flags) = serde_json::to_value(cli)? {
        for (k, v) in flags {
            if !v.is_null() {
                base_map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).with_context(|| format!("invalid option in {}", path.display()))
}

fn parse_json(s: &str) -> Result<Value, String> {
    serde_json::from_str(s).map_err(|e| format!("not valid JSON: {e}"))
}

pub fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| anyhow::anyhow!("missing required option --{flag}"))
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphGenArgs {
    /// Vertex count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge probability.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `.json` for graph JSON, anything else for an edge-list CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphValidateArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBuildArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Spectral map as JSON, e.g. '{"kind":"diffusion","sigma2":1.0}'.
    #[arg(long, value_parser = parse_json)]
    pub kernel: Option<Value>,
    /// Kernel matrix CSV (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `eigenvalue,weight,kernel_eigenvalue` rows for plotting the map.
    #[arg(long)]
    pub spectrum_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// `vertex_index,value` CSV.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Estimator as JSON, same schema as the `estimators` entries of an
    /// experiment config.
    #[arg(long, value_parser = parse_json)]
    pub estimator: Option<Value>,
    /// n×M basis CSV used for `cluster_indicators`.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// LMMSE noise variance when the estimator does not set one.
    #[arg(long)]
    pub noise_var: Option<f64>,
    /// Estimate as a one-column CSV (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// `t,vertex_index,value` CSV with 0-based `t`.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// Slot count, if trailing slots have no samples.
    #[arg(long)]
    pub t_len: Option<usize>,
    #[arg(long, value_parser = parse_json)]
    pub estimator: Option<Value>,
    /// n×T estimate CSV, one column per slot (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mkrikf only: `t,kernel,member,theta` rows.
    #[arg(long)]
    pub theta_out: Option<PathBuf>,
    /// kkf only: directory for the `P_t`/`Q_t` matrices.
    #[arg(long)]
    pub kkf_params_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmseArgs {
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// `t,nmse` rows per column.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment config JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Noise SNR in dB; `inf` for noise-free samples.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Output directory for report.json, nmse.csv and slot_nmse.csv.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker count (defaults to GRAPHKERNEL_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}
