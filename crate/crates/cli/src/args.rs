use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use liesde::{Error, Parametrization, Result, Scheme};
use serde::Serialize;

pub const INTERFACE_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "liesde",
    version = concat!(env!("CARGO_PKG_VERSION"), " (interface 1)"),
    about = "Geometric integrators for Ito SDEs on matrix Lie groups",
    args_override_self = true
)]
pub struct Cli {
    /// Flat `key=value` file; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (0 uses every available core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Strong convergence study on coupled Brownian paths.
    Convergence(ConvergenceArgs),
    /// Stochastic free rigid body: geometric and flat runs on the same noise.
    RigidBody(RigidBodyArgs),
    /// Rolling correlations, density fit and the SO(2) correlation flow.
    CorrFlow(CorrFlowArgs),
    /// Single-step diagnostics for a scheme and its derivative operators.
    StepCheck(StepCheckArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Convergence(_) => "convergence",
            Command::RigidBody(_) => "rigid-body",
            Command::CorrFlow(_) => "corr-flow",
            Command::StepCheck(_) => "step-check",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Gem,
    Git15,
    Gsrk15,
    Em,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Gem => Scheme::Gem,
            SchemeArg::Git15 => Scheme::Git15,
            SchemeArg::Gsrk15 => Scheme::Gsrk15,
            SchemeArg::Em => Scheme::FlatEm,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamArg {
    Exp,
    Cay,
}

pub fn parametrization(p: ParamArg, q: usize) -> Parametrization {
    match p {
        ParamArg::Exp => Parametrization::Exponential { q },
        ParamArg::Cay => Parametrization::Cayley,
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SchemeArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    pub param: Option<ParamArg>,
    /// Truncation index of the inverse exponential derivative series.
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    /// Run even when q is too small for the scheme's order.
    #[arg(long)]
    pub allow_underresolved: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "so3-test")]
    pub model: String,
    /// Step sizes to test, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dt: Vec<f64>,
    #[arg(long)]
    pub dt_ref: Option<f64>,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parametrization of the reference run; the scheme is the tested one.
    #[arg(long, value_enum, default_value = "cay")]
    pub reference_param: ParamArg,
    /// M = 1000 with steps 2^-14..2^-9 and reference 2^-16 unless overridden.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RigidBodyArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = 0.03)]
    pub dt: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Moments of inertia, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub inertia: Vec<f64>,
    /// Initial unit angular momentum, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub y0: Vec<f64>,
    /// Drive both runs with zero increments.
    #[arg(long)]
    pub zero_noise: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CorrFlowArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Prices with header `date,price_a,price_b`; a synthetic pair is used when absent.
    #[arg(long)]
    pub input_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 300)]
    pub synthetic_days: usize,
    #[arg(long, default_value_t = 0.0)]
    pub synthetic_correlation: f64,
    /// Initial correlation; defaults to the first rolling window.
    #[arg(long, allow_hyphen_values = true)]
    pub r0: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub variance_ratio: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 2000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Search interval for the noise amplitude, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.05, 1.0])]
    pub bounds: Vec<f64>,
    #[arg(long, default_value_t = 25)]
    pub budget: usize,
    #[arg(long, default_value_t = 2001)]
    pub grid_points: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StepCheckArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "so3-test")]
    pub model: String,
    #[arg(long, default_value_t = 1.0 / 256.0)]
    pub dt: f64,
    /// Time at which the step starts.
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Turns a flat `key=value` file into `--key=value` arguments. Blank lines and
/// lines starting with `#` are skipped; `key=true`/`key=false` toggle switches.
pub fn config_args(text: &str) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(Error::InvalidConfig(format!("config line {}: bad key", i + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => out.push(format!("--{key}={v}").into()),
        }
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts the config file's arguments right after the subcommand so that
/// explicit flags, which come later, override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    let extra = config_args(&text)?;
    let names = ["convergence", "rigid-body", "corr-flow", "step-check"];
    let Some(pos) = args.iter().position(|a| names.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
