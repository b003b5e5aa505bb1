//! Run configuration: a JSON file merged with command-line flags, flags winning.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use hermicop::{DykstraOptions, FitFamily};
use serde::Deserialize;

/// Bad configuration or command-line input.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub bound: Option<f64>,
    pub sections: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DykstraConfig {
    pub tol: Option<f64>,
    pub max_sweeps: Option<usize>,
}

/// Every field is optional; unknown fields are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub pillars: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub grid: GridConfig,
    pub n_max: Option<usize>,
    pub dykstra: DykstraConfig,
    pub families: Option<Vec<String>>,
    pub spearman: Option<f64>,
    pub cross: Option<String>,
    pub via: Option<String>,
    pub date: Option<String>,
    pub tenor: Option<String>,
    pub month_end: Option<String>,
    pub settings: Option<Vec<String>>,
    pub family: Option<String>,
    pub theta: Option<f64>,
    pub rho: Option<f64>,
    pub m_check: Option<[f64; 4]>,
    pub strikes: Option<usize>,
    pub strike_width: Option<f64>,
    pub sweep_points: Option<usize>,
    pub rho_width: Option<f64>,
    pub theta_width: Option<f64>,
    pub m_width: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| input_error(format!("config {}: {e}", path.display())))
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for output files (created if needed).
    #[arg(long, short)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GridArgs {
    /// Half-width of the square grid.
    #[arg(long)]
    pub bound: Option<f64>,
    /// Sections per axis.
    #[arg(long)]
    pub sections: Option<usize>,
    /// Dykstra stopping tolerance on the L2 change per sweep.
    #[arg(long)]
    pub dykstra_tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct MarketArgs {
    /// Pillar CSV with straight-pair (and cross) quotes.
    #[arg(long)]
    pub pillars: Option<PathBuf>,
    /// Cross pair, e.g. EURJPY.
    #[arg(long)]
    pub cross: Option<String>,
    /// Common quote currency of the straight pairs, e.g. USD.
    #[arg(long)]
    pub via: Option<String>,
    #[arg(long)]
    pub tenor: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CopulaArgs {
    /// Fitted-parameter JSON; its records are used in file order.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Family when parameters are given by flags.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Scaled coefficients m3,m4,m5,m6.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub m_check: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone)]
pub struct FitDensityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Classical families to approximate (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Spearman rank correlation of the targets.
    #[arg(long, allow_hyphen_values = true)]
    pub spearman: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long)]
    pub date: Option<String>,
    /// Families to fit (comma separated; hermite included by name).
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
}

#[derive(Args, Debug, Clone)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    /// Date of the month-end fit; later dates in the file are backtested.
    #[arg(long)]
    pub month_end: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Settings to run: c (daily ATM recalibration), d (frozen).
    #[arg(long, value_delimiter = ',')]
    pub settings: Option<Vec<String>>,
}

#[derive(Args, Debug, Clone)]
pub struct PriceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub copula: CopulaArgs,
    #[arg(long)]
    pub date: Option<String>,
    /// Number of strikes on the output grid.
    #[arg(long)]
    pub strikes: Option<usize>,
    /// Half-width of the strike grid in standard deviations of log-moneyness.
    #[arg(long)]
    pub strike_width: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub market: MarketArgs,
    #[command(flatten)]
    pub copula: CopulaArgs,
    #[arg(long)]
    pub date: Option<String>,
    /// Points per swept parameter.
    #[arg(long)]
    pub sweep_points: Option<usize>,
    /// Half-width of the rho sweep.
    #[arg(long)]
    pub rho_width: Option<f64>,
    /// Half-width of the theta sweep of classical families.
    #[arg(long)]
    pub theta_width: Option<f64>,
    /// Half-width of each scaled-coefficient sweep.
    #[arg(long)]
    pub m_width: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct CorrectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Grid density CSV (with its JSON sidecar) to correct.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Also preserve the expansion moments of the input up to this order.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub dykstra_tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
}

pub fn output_dir(common: &CommonArgs, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = common.output_dir.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn dykstra_options(tol: Option<f64>, max_sweeps: Option<usize>, cfg: &RunConfig) -> Result<DykstraOptions> {
    let mut o = DykstraOptions::default();
    if let Some(t) = tol.or(cfg.dykstra.tol) {
        if !(t > 0.0) {
            return Err(input_error(format!("Dykstra tolerance must be positive, got {t}")));
        }
        o.tol = t;
    }
    if let Some(m) = max_sweeps.or(cfg.dykstra.max_sweeps) {
        if m == 0 {
            return Err(input_error("max_sweeps must be at least 1"));
        }
        o.max_sweeps = m;
    }
    Ok(o)
}

pub fn families(flag: &Option<Vec<String>>, cfg: &RunConfig, default: &[FitFamily]) -> Result<Vec<FitFamily>> {
    match flag.as_ref().or(cfg.families.as_ref()) {
        None => Ok(default.to_vec()),
        Some(names) if names.is_empty() => Err(input_error("empty family list")),
        Some(names) => names
            .iter()
            .map(|n| n.trim().parse::<FitFamily>().map_err(|e| input_error(e.to_string())))
            .collect(),
    }
}

/// Resolved pillar-file context shared by the market commands.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    pub pillars: PathBuf,
    pub cross: String,
    pub via: String,
    pub tenor: Option<String>,
}

pub fn market_spec(a: &MarketArgs, cfg: &RunConfig) -> Result<MarketSpec> {
    let pillars = a
        .pillars
        .clone()
        .or_else(|| cfg.pillars.clone())
        .ok_or_else(|| input_error("no pillar file given (--pillars or \"pillars\")"))?;
    let cross = a.cross.clone().or_else(|| cfg.cross.clone()).ok_or_else(|| input_error("no cross pair given (--cross)"))?;
    let via = a.via.clone().or_else(|| cfg.via.clone()).unwrap_or_else(|| "USD".into());
    if cross.len() != 6 || via.len() != 3 {
        return Err(input_error(format!("expected a 6-letter cross and 3-letter quote currency, got '{cross}' via '{via}'")));
    }
    Ok(MarketSpec {
        pillars,
        cross: cross.to_ascii_uppercase(),
        via: via.to_ascii_uppercase(),
        tenor: a.tenor.clone().or_else(|| cfg.tenor.clone()),
    })
}
