//! Command-line harness: resolves a flat key-value experiment config from a
//! file and flags, runs one pipeline and writes CSV and JSON artifacts.
//!
//! Every run writes `manifest.json`, a flat config that reproduces the run
//! when passed back through `--config`, and `summary.json`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use latent_impact::book::{calibrate_scale, solve_book_general, volume_profile_slope};
use latent_impact::decay::{decay_curve, full_decay_lambda, DecayParams, Geometric};
use latent_impact::execution::{
    asymmetry_premium, bucket_strategy, gain_analytics, trivial_strategy_bounds, vwap_cost_mc,
    SignMode, VwapConfig,
};
use latent_impact::impact::{
    aggregate_impact_mc, renormalized_asymptote, renormalized_curve_and_increment,
    single_trade_cutoff_curve, AggregateConfig, ImpactLaw, RenormConfig,
};
use latent_impact::numerics::{fit_loglog_between, log_space, log_space_int};
use latent_impact::sim::{
    mm_pnl_by_size, run_simulation, variance_growth_exponent, volatility_signature, MmPolicy,
    SimConfig,
};
use latent_impact::TailDistribution;

#[derive(Debug, Parser)]
#[command(
    name = "latent-impact",
    version,
    about = "Latent order book and market impact laboratory"
)]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo replicas.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat TOML or JSON config; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<CommandArgs>,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Solve the latent order book.
    Book(BookArgs),
    /// Simulate informed, noise and market-maker flow.
    Simulate(SimulateArgs),
    /// Impact decay after completion.
    Decay(DecayArgs),
    /// Renormalized impact of one trader.
    Renorm(RenormArgs),
    /// Aggregate impact against order-flow imbalance.
    Aggregate(AggregateArgs),
    /// Execution-cost analytics.
    Exec(ExecArgs),
    /// Impact scale from volatility.
    Calibrate(CalibrateArgs),
}

impl CommandArgs {
    fn name(&self) -> &'static str {
        match self {
            CommandArgs::Book(_) => "book",
            CommandArgs::Simulate(_) => "simulate",
            CommandArgs::Decay(_) => "decay",
            CommandArgs::Renorm(_) => "renorm",
            CommandArgs::Aggregate(_) => "aggregate",
            CommandArgs::Exec(_) => "exec",
            CommandArgs::Calibrate(_) => "calibrate",
        }
    }

    fn overrides(&self) -> Result<Map<String, Value>> {
        let v = match self {
            CommandArgs::Book(a) => serde_json::to_value(a),
            CommandArgs::Simulate(a) => serde_json::to_value(a),
            CommandArgs::Decay(a) => serde_json::to_value(a),
            CommandArgs::Renorm(a) => serde_json::to_value(a),
            CommandArgs::Aggregate(a) => serde_json::to_value(a),
            CommandArgs::Exec(a) => serde_json::to_value(a),
            CommandArgs::Calibrate(a) => serde_json::to_value(a),
        }?;
        match v {
            Value::Object(m) => Ok(m),
            _ => unreachable!("argument structs serialize to objects"),
        }
    }
}

/// Flags shared by commands that draw from a power-law size law.
#[derive(Debug, Args, Serialize)]
pub struct DistArgs {
    /// Tail exponent in (1, 2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Smallest meta-order size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_min: Option<f64>,
    /// Finite truncation; omitted means untruncated.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
}

macro_rules! flag_struct {
    ($name:ident { $($(#[$doc:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        #[derive(Debug, Args, Serialize)]
        pub struct $name {
            $(
                $(#[$doc])*
                #[arg(long)]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

#[derive(Debug, Args, Serialize)]
pub struct BookArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistArgs,
    /// First book boundary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    /// Number of book levels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmax: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistArgs,
    /// Informed share of trades in (0, 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Number of trades.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// `adaptive-competitive` or `passive-refill`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// First book boundary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    /// Number of book levels.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmax: Option<usize>,
    /// Shortest lag of the variance fit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag_lo: Option<usize>,
    /// Longest lag of the variance fit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lag_hi: Option<usize>,
    /// Write the per-trade event log.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub write_events: Option<bool>,
}

flag_struct!(DecayArgs {
    /// Impact exponent in (0, 1).
    delta: f64,
    /// Meta-order duration.
    t_max: f64,
    /// Meta-order volume.
    volume: f64,
    /// Grid points after completion.
    points: usize,
    /// Last grid time in units of `t_max`.
    t_hi: f64,
});

#[derive(Debug, Args, Serialize)]
pub struct RenormArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistArgs,
    /// Impact scale.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Total participation rate in (0, 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Participation rate of the tracked trader.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_tilde: Option<f64>,
    /// Smallest tracked-trader volume.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_a_lo: Option<f64>,
    /// Largest tracked-trader volume.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_a_hi: Option<f64>,
    /// Volumes on the log grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Monte Carlo replicas.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct AggregateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistArgs,
    /// Impact scale.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Trades per imbalance window.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    /// Independent trade sequences.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    /// Trades per sequence.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequence_len: Option<u64>,
    /// Windows drawn from each sequence.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub windows_per_replica: Option<usize>,
    /// Imbalance bins per side.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Samples for the single-trade curve; zero skips it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_trade_samples: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExecArgs {
    /// Impact exponent in (0, 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Impact scale.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// First bucket size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    /// Number of buckets.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Total volume to execute.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volume: Option<f64>,
    /// Price volatility over the execution.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_t: Option<f64>,
    /// Informed share of trades in (0, 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Smallest meta-order size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_min: Option<f64>,
    /// Finite truncation; omitted means untruncated.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    /// VWAP order volume.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_a: Option<f64>,
    /// Comma-separated participation rates.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_tilde: Option<Vec<f64>>,
    /// Risk aversion; zero minimizes mean cost.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_risk: Option<f64>,
    /// Zero skips the VWAP Monte Carlo.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vwap_replicas: Option<usize>,
    /// `conditional` or `sampled`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign_mode: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub dist: DistArgs,
    /// Volatility per trade.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Informed share of trades in (0, 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BookParams {
    pub gamma: f64,
    pub l_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    pub l0: f64,
    pub pmax: usize,
}

impl Default for BookParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            l_min: 1.0,
            l_max: None,
            l0: 1.0,
            pmax: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateParams {
    pub gamma: f64,
    pub l_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    pub mu: f64,
    pub horizon: u64,
    pub policy: MmPolicy,
    pub l0: f64,
    pub pmax: usize,
    pub lag_lo: usize,
    pub lag_hi: usize,
    pub write_events: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            l_min: 1.0,
            l_max: None,
            mu: 1.0,
            horizon: 100_000,
            policy: MmPolicy::AdaptiveCompetitive,
            l0: 1.0,
            pmax: 2000,
            lag_lo: 10,
            lag_hi: 1000,
            write_events: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayCommandParams {
    pub delta: f64,
    pub t_max: f64,
    pub volume: f64,
    pub points: usize,
    /// Last grid time in units of `t_max`.
    pub t_hi: f64,
}

impl Default for DecayCommandParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            t_max: 1000.0,
            volume: 100.0,
            points: 200,
            t_hi: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenormParams {
    pub gamma: f64,
    pub l_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    pub c: f64,
    pub mu: f64,
    pub mu_tilde: f64,
    pub l_a_lo: f64,
    pub l_a_hi: f64,
    pub points: usize,
    pub replicas: usize,
}

impl Default for RenormParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            l_min: 1.0,
            l_max: Some(100.0),
            c: 1.0,
            mu: 1.0,
            mu_tilde: 0.001,
            l_a_lo: 1e-4,
            l_a_hi: 10.0,
            points: 21,
            replicas: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregateParams {
    pub gamma: f64,
    pub l_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    pub c: f64,
    pub window: u64,
    pub replicas: usize,
    pub sequence_len: u64,
    pub windows_per_replica: usize,
    pub bins: usize,
    /// Zero skips the single-trade curve.
    pub single_trade_samples: usize,
}

impl Default for AggregateParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            l_min: 1.0,
            l_max: Some(100.0),
            c: 1.0,
            window: 1000,
            replicas: 200,
            sequence_len: 100_000,
            windows_per_replica: 500,
            bins: 20,
            single_trade_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecParams {
    pub delta: f64,
    pub c: f64,
    pub l0: f64,
    pub steps: usize,
    pub volume: f64,
    pub sigma_t: f64,
    pub mu: f64,
    pub l_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    pub l_a: f64,
    pub mu_tilde: Vec<f64>,
    pub lambda_risk: f64,
    pub vwap_replicas: usize,
    pub sign_mode: SignMode,
}

impl Default for ExecParams {
    fn default() -> Self {
        Self {
            delta: 0.5,
            c: 1.0,
            l0: 1.0,
            steps: 10,
            volume: 100.0,
            sigma_t: 1.0,
            mu: 0.5,
            l_min: 1.0,
            l_max: None,
            l_a: 3.0,
            mu_tilde: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            lambda_risk: 0.0,
            vwap_replicas: 0,
            sign_mode: SignMode::Conditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateParams {
    pub gamma: f64,
    pub l_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    pub sigma: f64,
    pub mu: f64,
}

impl Default for CalibrateParams {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            l_min: 1.0,
            l_max: None,
            sigma: 1.0,
            mu: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Book(BookParams),
    Simulate(SimulateParams),
    Decay(DecayCommandParams),
    Renorm(RenormParams),
    Aggregate(AggregateParams),
    Exec(ExecParams),
    Calibrate(CalibrateParams),
}

impl CommandConfig {
    pub fn name(&self) -> &'static str {
        match self {
            CommandConfig::Book(_) => "book",
            CommandConfig::Simulate(_) => "simulate",
            CommandConfig::Decay(_) => "decay",
            CommandConfig::Renorm(_) => "renorm",
            CommandConfig::Aggregate(_) => "aggregate",
            CommandConfig::Exec(_) => "exec",
            CommandConfig::Calibrate(_) => "calibrate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: CommandConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: usize,
}

const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    /// Flat map echoing every resolved key except the output directory and
    /// thread count, neither of which changes results.
    pub fn manifest(&self) -> Value {
        let mut m = match serde_json::to_value(&self.command).expect("params serialize") {
            Value::Object(m) => m,
            _ => unreachable!("tagged enum serializes to an object"),
        };
        m.insert("seed".into(), json!(self.seed));
        Value::Object(m)
    }
}

fn read_config_file(path: &Path) -> Result<Map<String, Value>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => bail!("config {} must be a flat key-value table", path.display()),
    }
}

fn take_u64(map: &mut Map<String, Value>, key: &str) -> Result<Option<u64>> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| anyhow!("key `{key}`: expected a non-negative integer, got {v}")),
    }
}

fn params<T: DeserializeOwned>(map: Map<String, Value>, command: &str) -> Result<T> {
    serde_json::from_value(Value::Object(map))
        .map_err(|e| anyhow!("invalid `{command}` config: {e}"))
}

/// Resolves file values overlaid by flags into a validated config.
pub fn parse_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut map = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => Map::new(),
    };
    let file_command = match map.remove("command") {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(v) => bail!("key `command`: expected a string, got {v}"),
    };
    let command = match (&cli.command, file_command) {
        (Some(args), Some(f)) if f != args.name() => {
            bail!(
                "config file is for `{f}` but `{}` was requested",
                args.name()
            )
        }
        (Some(args), _) => args.name().to_string(),
        (None, Some(f)) => f,
        (None, None) => bail!("no command given; pass a subcommand or a config with `command`"),
    };
    let file_seed = take_u64(&mut map, "seed")?;
    let file_threads = take_u64(&mut map, "threads")?;
    let file_out = match map.remove("out") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => bail!("key `out`: expected a string, got {v}"),
    };
    if let Some(args) = &cli.command {
        map.extend(args.overrides()?);
    }
    let command = match command.as_str() {
        "book" => CommandConfig::Book(params(map, "book")?),
        "simulate" => CommandConfig::Simulate(params(map, "simulate")?),
        "decay" => CommandConfig::Decay(params(map, "decay")?),
        "renorm" => CommandConfig::Renorm(params(map, "renorm")?),
        "aggregate" => CommandConfig::Aggregate(params(map, "aggregate")?),
        "exec" => CommandConfig::Exec(params(map, "exec")?),
        "calibrate" => CommandConfig::Calibrate(params(map, "calibrate")?),
        other => bail!("unknown command `{other}`"),
    };
    validate(&command)?;
    let threads = cli
        .threads
        .or(file_threads.map(|t| t as usize))
        .unwrap_or(1);
    if threads == 0 {
        bail!("key `threads`: must be at least 1");
    }
    Ok(ExperimentConfig {
        command,
        seed: cli.seed.or(file_seed).unwrap_or(DEFAULT_SEED),
        output_dir: cli
            .out
            .clone()
            .or(file_out)
            .unwrap_or_else(|| PathBuf::from("out")),
        threads,
    })
}

/// Parses a full argument vector, program name first.
pub fn parse_args<I, T>(args: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    parse_config(&cli)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 1.0) {
        bail!("key `gamma`: gamma must exceed 1, got {gamma}");
    }
    Ok(())
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || v.is_nan() {
        bail!("key `{key}`: must be positive, got {v}");
    }
    Ok(())
}

fn check_rate(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        bail!("key `{key}`: must lie in (0, 1], got {v}");
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        bail!("key `delta`: must lie in (0, 1), got {delta}");
    }
    Ok(())
}

fn check_impact_gamma(gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    if !(gamma < 2.0) {
        bail!("key `gamma`: impact estimators need gamma below 2, got {gamma}");
    }
    Ok(())
}

fn check_dist(gamma: f64, l_min: f64, l_max: Option<f64>) -> Result<()> {
    check_gamma(gamma)?;
    check_positive("l_min", l_min)?;
    if let Some(m) = l_max {
        if !(m > l_min) {
            bail!("key `l_max`: must exceed l_min = {l_min}, got {m}");
        }
    }
    Ok(())
}

fn validate(cmd: &CommandConfig) -> Result<()> {
    match cmd {
        CommandConfig::Book(p) => {
            check_dist(p.gamma, p.l_min, p.l_max)?;
            check_positive("l0", p.l0)?;
            if p.pmax == 0 {
                bail!("key `pmax`: must be at least 1");
            }
        }
        CommandConfig::Simulate(p) => {
            check_dist(p.gamma, p.l_min, p.l_max)?;
            check_rate("mu", p.mu)?;
            check_positive("l0", p.l0)?;
            if p.horizon == 0 {
                bail!("key `horizon`: must be at least 1");
            }
            if !(p.lag_lo >= 1 && p.lag_hi > p.lag_lo) {
                bail!("keys `lag_lo`, `lag_hi`: need 1 <= lag_lo < lag_hi");
            }
        }
        CommandConfig::Decay(p) => {
            check_delta(p.delta)?;
            if !(p.t_max >= 1.0) {
                bail!("key `t_max`: must be at least 1, got {}", p.t_max);
            }
            check_positive("volume", p.volume)?;
            check_positive("t_hi", p.t_hi)?;
            if p.points < 2 {
                bail!("key `points`: must be at least 2");
            }
        }
        CommandConfig::Renorm(p) => {
            check_dist(p.gamma, p.l_min, p.l_max)?;
            check_impact_gamma(p.gamma)?;
            check_positive("c", p.c)?;
            check_rate("mu", p.mu)?;
            check_rate("mu_tilde", p.mu_tilde)?;
            if p.mu_tilde > p.mu {
                bail!("key `mu_tilde`: must not exceed mu = {}", p.mu);
            }
            check_positive("l_a_lo", p.l_a_lo)?;
            if !(p.l_a_hi > p.l_a_lo) {
                bail!("key `l_a_hi`: must exceed l_a_lo");
            }
            if p.points < 2 || p.replicas == 0 {
                bail!("keys `points`, `replicas`: need at least 2 points and 1 replica");
            }
        }
        CommandConfig::Aggregate(p) => {
            check_dist(p.gamma, p.l_min, p.l_max)?;
            check_impact_gamma(p.gamma)?;
            check_positive("c", p.c)?;
            if p.window == 0 || p.window >= p.sequence_len {
                bail!("key `window`: must be positive and shorter than sequence_len");
            }
        }
        CommandConfig::Exec(p) => {
            check_delta(p.delta)?;
            check_positive("c", p.c)?;
            check_positive("l0", p.l0)?;
            check_positive("volume", p.volume)?;
            check_rate("mu", p.mu)?;
            check_dist(p.delta + 1.0, p.l_min, p.l_max)?;
            if p.steps == 0 {
                bail!("key `steps`: must be at least 1");
            }
            if p.vwap_replicas == 1 {
                bail!("key `vwap_replicas`: need 0 (skip) or at least 2");
            }
        }
        CommandConfig::Calibrate(p) => {
            check_dist(p.gamma, p.l_min, p.l_max)?;
            check_positive("sigma", p.sigma)?;
            check_rate("mu", p.mu)?;
        }
    }
    Ok(())
}

fn power_law(gamma: f64, l_min: f64, l_max: Option<f64>) -> Result<TailDistribution> {
    Ok(match l_max {
        Some(m) => TailDistribution::truncated_power_law(gamma, l_min, m)?,
        None => TailDistribution::power_law(gamma, l_min)?,
    })
}

/// Files written by one run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub files: Vec<String>,
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
    ) -> Result<()> {
        let path = self.dir.join(name);
        let file =
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        write(&mut w).with_context(|| format!("writing {}", path.display()))?;
        std::io::Write::flush(&mut w)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn init_threads(threads: usize) {
    // the global pool can only be built once per process
    if rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_err()
    {
        log::debug!("thread pool already initialized");
    }
}

/// Runs the configured pipeline and writes its artifacts.
pub fn run_command(cfg: &ExperimentConfig) -> Result<RunOutput> {
    init_threads(cfg.threads);
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    let mut out = Outputs {
        dir: &cfg.output_dir,
        files: Vec::new(),
    };
    log::info!("running `{}` with seed {}", cfg.command.name(), cfg.seed);
    let summary = match &cfg.command {
        CommandConfig::Book(p) => run_book(p, &mut out),
        CommandConfig::Simulate(p) => run_simulate(p, cfg.seed, &mut out),
        CommandConfig::Decay(p) => run_decay(p, &mut out),
        CommandConfig::Renorm(p) => run_renorm(p, cfg.seed, &mut out),
        CommandConfig::Aggregate(p) => run_aggregate(p, cfg.seed, &mut out),
        CommandConfig::Exec(p) => run_exec(p, cfg.seed, &mut out),
        CommandConfig::Calibrate(p) => run_calibrate(p),
    }
    .with_context(|| format!("command `{}` failed", cfg.command.name()))?;
    out.json("summary.json", &summary)?;
    out.json("manifest.json", &cfg.manifest())?;
    Ok(RunOutput { files: out.files })
}

fn run_book(p: &BookParams, out: &mut Outputs) -> Result<Value> {
    let dist = power_law(p.gamma, p.l_min, p.l_max)?;
    let book = solve_book_general(&dist, p.l0, p.pmax)?;
    out.csv("book.csv", |w| book.write_csv(w))?;
    let top = book.levels().last().expect("book has levels");
    let exponent = book.impact_exponent().ok().map(|f| f.slope);
    let profile = volume_profile_slope(&book).ok().map(|f| f.slope);
    let reversion_ratio = match (book.reversion_at(top.l_p), book.impact_at(top.l_p)) {
        (Ok(r), Ok(i)) if i > 0.0 => Some(r / i),
        _ => None,
    };
    Ok(json!({
        "levels": book.p_max(),
        "l_top": book.l_top(),
        "alpha_last": top.alpha_p,
        "alpha_limit": (p.gamma - 1.0) / p.gamma,
        "impact_exponent": exponent,
        "volume_profile_slope": profile,
        "reversion_ratio": reversion_ratio,
        "scale_c": book.scale_c(),
        "truncated_at": book.truncation().map(|(lvl, why)| json!({"level": lvl, "reason": format!("{why:?}")})),
    }))
}

fn run_simulate(p: &SimulateParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let dist = power_law(p.gamma, p.l_min, p.l_max)?;
    let book = match p.policy {
        MmPolicy::AdaptiveCompetitive => Some(solve_book_general(&dist, p.l0, p.pmax)?),
        MmPolicy::PassiveRefill => None,
    };
    let result = run_simulation(&SimConfig {
        dist,
        mu: p.mu,
        horizon: p.horizon,
        policy: p.policy,
        book,
        seed,
    })?;
    let lags: Vec<usize> = log_space_int(1, (p.horizon / 10).max(1), 25)
        .into_iter()
        .map(|l| l as usize)
        .collect();
    let (points, omitted) = volatility_signature(&result, &lags);
    out.csv("signature.csv", |w| {
        latent_impact::sim::write_signature_csv(&points, w)
    })?;
    if p.write_events {
        out.csv("events.csv", |w| result.write_events_csv(w))?;
    }
    let exponent = variance_growth_exponent(&points, p.lag_lo, p.lag_hi).ok();
    let buckets = mm_pnl_by_size(&result);
    Ok(json!({
        "policy": p.policy,
        "trades": p.horizon,
        "meta_orders": result.meta_orders.len(),
        "resampled_draws": result.resampled,
        "variance_exponent": exponent.map(|f| f.slope),
        "variance_exponent_stderr": exponent.map(|f| f.stderr),
        "fit_lags": [p.lag_lo, p.lag_hi],
        "omitted_lags": omitted,
        "level_exit_mean": result.martingale.mean,
        "level_exit_stderr": result.martingale.stderr,
        "level_exits": result.martingale.n,
        "mm_pnl_by_size": buckets,
        "final_price": result.price_path.last(),
    }))
}

fn run_decay(p: &DecayCommandParams, out: &mut Outputs) -> Result<Value> {
    let params = DecayParams::new(p.delta, p.t_max, p.volume)?;
    let grid: Vec<f64> = (0..p.points)
        .map(|i| p.t_hi * p.t_max * i as f64 / (p.points - 1) as f64)
        .collect();
    let curve = decay_curve(&params, &grid)?;
    out.csv("decay.csv", |w| curve.write_csv(w))?;
    let lambda = full_decay_lambda(p.delta, &Geometric, p.t_max)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .points
        .iter()
        .filter(|(t, r)| *t > 0.0 && *r < 1.0)
        .map(|&(t, r)| (t / p.t_max, 1.0 - r))
        .unzip();
    let short = fit_loglog_between(&xs, &ys, 0.0, 0.1).ok().map(|f| f.slope);
    Ok(json!({
        "lambda": lambda,
        "floor": 1.0 / (1.0 + p.delta),
        "short_time_slope": short,
    }))
}

fn run_renorm(p: &RenormParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let dist = power_law(p.gamma, p.l_min, p.l_max)?;
    let law = ImpactLaw::new(p.c, p.gamma)?;
    let cfg = RenormConfig {
        l_a: log_space(p.l_a_lo, p.l_a_hi, p.points),
        mu_tilde: p.mu_tilde,
        mu: p.mu,
        dist: dist.clone(),
        law,
        replicas: p.replicas,
        seed,
    };
    let (curve, increment) = renormalized_curve_and_increment(&cfg)?;
    out.csv("renorm.csv", |w| curve.write_csv(w))?;
    let decade_lo = curve.exponent_between(p.l_a_lo, p.l_a_lo * 10.0).ok();
    let decade_hi = curve.exponent_between(p.l_a_hi / 10.0, p.l_a_hi).ok();
    Ok(json!({
        "fit": curve.fit,
        "first_decade_exponent": decade_lo.map(|f| f.exponent),
        "last_decade_exponent": decade_hi.map(|f| f.exponent),
        "asymptote_closed_form": renormalized_asymptote(p.mu_tilde, p.mu, &dist, &law)?,
        "per_unit_moment_ratio": renormalized_asymptote(1.0, 1.0, &dist, &law)?,
        "increment_slope": increment.mean,
        "increment_slope_stderr": increment.stderr,
    }))
}

fn run_aggregate(p: &AggregateParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let dist = power_law(p.gamma, p.l_min, p.l_max)?;
    let law = ImpactLaw::new(p.c, p.gamma)?;
    let curve = aggregate_impact_mc(&AggregateConfig {
        window: p.window,
        dist: dist.clone(),
        law,
        replicas: p.replicas,
        sequence_len: p.sequence_len,
        windows_per_replica: p.windows_per_replica,
        bins: p.bins,
        seed,
    })?;
    out.csv("aggregate.csv", |w| curve.write_csv(w))?;
    // equal-count bins, so the first half of the positive side is |Q| up to its median
    let pos: Vec<f64> = curve
        .points
        .iter()
        .filter(|q| q.x > 0.0)
        .map(|q| q.x)
        .collect();
    let median_fit = match (
        pos.first(),
        pos.len().checked_div(2).and_then(|h| h.checked_sub(1)),
    ) {
        (Some(&lo), Some(i)) => curve.weighted_exponent_between(lo, pos[i]).ok(),
        _ => None,
    };
    let mut summary = json!({
        "fit": curve.fit,
        "median_q_exponent": median_fit.map(|f| f.exponent),
        "bin_edges": curve.bin_edges,
    });
    if p.single_trade_samples > 0 {
        match p.l_max {
            Some(l_max) => {
                let hi = ((l_max / 10.0).floor() as u64).max(2);
                let ls = log_space_int(1, hi, 12);
                let fit =
                    single_trade_cutoff_curve(&dist, &law, &ls, p.single_trade_samples, seed)?;
                out.csv("single_trade.csv", |w| fit.monte_carlo.write_csv(w))?;
                summary["single_trade"] = json!({
                    "fit": fit.monte_carlo.fit,
                    "cte": fit.cte,
                    "cte_prime": fit.cte_prime,
                });
            }
            None => log::warn!("single-trade cutoff curve skipped: l_max is not set"),
        }
    }
    Ok(summary)
}

fn run_exec(p: &ExecParams, seed: u64, out: &mut Outputs) -> Result<Value> {
    let analytics = gain_analytics(p.delta)?;
    let schedule = bucket_strategy(p.l0, p.steps, p.delta, p.c, analytics.lambda)?;
    let (trivial_saving, trivial_time) =
        trivial_strategy_bounds(p.delta, p.volume, analytics.lambda)?;
    let dist = power_law(p.delta + 1.0, p.l_min, p.l_max)?;
    let premium = asymmetry_premium(p.volume, p.mu, p.sigma_t, p.delta, &dist).ok();
    out.csv("schedule.csv", |w| {
        use std::io::Write;
        writeln!(w, "n,size,cumulative,time")?;
        for b in &schedule.buckets {
            writeln!(
                w,
                "{},{},{},{}",
                b.n,
                latent_impact::csv::fmt_sig(b.size, 12),
                latent_impact::csv::fmt_sig(b.cumulative, 12),
                latent_impact::csv::fmt_sig(b.time, 12)
            )?;
        }
        Ok(())
    })?;
    let mut summary = json!({
        "delta": analytics.delta,
        "f": analytics.f,
        "g": analytics.g,
        "G": analytics.gain,
        "G_max": analytics.gain_max,
        "lambda": analytics.lambda,
        "bucket_relative_saving": schedule.relative_saving,
        "bucket_completion_time": schedule.completion_time,
        "bucket_linear_time_estimate": schedule.linear_time_estimate,
        "trivial_saving_bound": trivial_saving,
        "trivial_completion_time": trivial_time,
        "premium_per_unit": premium.map(|x| x.per_unit),
        "premium_total": premium.map(|x| x.total),
    });
    if p.vwap_replicas > 0 {
        let report = vwap_cost_mc(&VwapConfig {
            l_a: p.l_a,
            mu_tilde: p.mu_tilde.clone(),
            mu: 1.0,
            dist,
            law: ImpactLaw::new(p.c, p.delta + 1.0)?,
            replicas: p.vwap_replicas,
            seed,
            sign_mode: p.sign_mode,
            lambda_risk: p.lambda_risk,
        })?;
        out.csv("vwap.csv", |w| report.write_csv(w))?;
        summary["vwap_beta"] = json!(report.beta);
        summary["vwap_beta_stderr"] = json!(report.beta_stderr);
        summary["vwap_optimal_rate"] = json!(report.optimal_rate);
    }
    Ok(summary)
}

fn run_calibrate(p: &CalibrateParams) -> Result<Value> {
    let dist = power_law(p.gamma, p.l_min, p.l_max)?;
    let c = calibrate_scale(p.sigma, p.mu, &dist, p.gamma)?;
    Ok(json!({ "scale_c": c, "delta": p.gamma - 1.0 }))
}
