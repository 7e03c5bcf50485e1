//! Command-line front end: field simulation, long-run variance
//! estimation (plain and thresholded), block subsampling, data-driven
//! selection of the truncation box and threshold exponent, the
//! partial-sum image test, and built-in experiment presets.
//!
//! Exit codes: 0 on success, 2 when arguments or configuration are
//! invalid (the diagnostic names the offending parameter), 1 when a
//! computation fails on admissible inputs.

use std::collections::hash_map::RandomState;
use std::collections::BTreeMap;
use std::fs;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use gridlrv::{
    empirical_distribution, grand_mean, image_test, lrv_estimate, lrv_estimate_centered,
    mc_experiment, ring_confidence_interval, select_m, simulate, subsample_mean,
    subsample_mean_rmse, subsample_quantile, subsample_rmse, subsample_rmse_centered,
    subsample_values, threshold_lrv, tune_alpha_report, type1_error_sweep, CutRule, Error,
    ExperimentReport, Field, KernelSpec, ModelSpec, Reference, Result, SeedSpec, SubsampleGrid,
    VarianceEstimate, DEFAULT_DELTA,
};

/// Seed used by `reproduce` when none is given; always echoed in the
/// output metadata.
const DEFAULT_REPRODUCE_SEED: u64 = 271_828_182_845;

#[derive(Parser)]
#[command(
    name = "gridlrv",
    version,
    about = "Long-run variance estimation for stationary random fields on integer grids",
    after_help = "Exit codes: 0 success, 2 invalid arguments or configuration, 1 computation error."
)]
struct Cli {
    /// Flat `key = value` defaults file (`#` comments allowed). Keys
    /// mirror the long flag names; flags and GRIDLRV_* environment
    /// variables win on conflict, and keys that do not apply to the
    /// invoked command are ignored.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output format for results (field files keep their own formats).
    #[arg(long, global = true, value_enum, env = "GRIDLRV_FORMAT")]
    format: Option<Format>,

    /// Write results to this file instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, env = "GRIDLRV_THREADS", value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a model field and write it in the field CSV or binary
    /// format. Run metadata goes to standard error so the data stream
    /// stays parseable.
    Simulate(SimulateArgs),
    /// Kernel-weighted long-run variance estimate of a stored field.
    Estimate(EstimateArgs),
    /// Long-run variance estimate keeping only sample autocovariances
    /// whose magnitude clears a lag-dependent threshold.
    ThresholdEstimate(ThresholdEstimateArgs),
    /// Statistics of the per-block estimates over a sliding-block grid.
    Subsample(SubsampleArgs),
    /// Data-driven choice of the threshold exponent from one field.
    Tune(TuneArgs),
    /// Sequential choice of the truncation box from one field.
    SelectM(SelectMArgs),
    /// Partial-sum significance test of a field against a reference.
    ImageTest(ImageTestArgs),
    /// Built-in experiment presets; see --table for the list.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model family: m1 | m2 | sma | iid | m4 | m5 | multiplicative.
    #[arg(long)]
    model: Option<String>,
    /// 3x3 stencil for m1 / m4 / multiplicative: either one value used
    /// for all eight neighbours (centre fixed at 1) or all nine
    /// entries row-major [default: 0.3].
    #[arg(long, value_name = "LIST")]
    a: Option<String>,
    /// m2 ring weights [defaults: 0.5, 0.3, 0.1].
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
    #[arg(long)]
    a3: Option<f64>,
    /// AR(1) coefficient of m4 [default: 0.2] or decay rate of m5
    /// [default: 0.3].
    #[arg(long)]
    rho: Option<f64>,
    /// AR(1) coefficient of the multiplicative model's time factor
    /// [default: 0.2].
    #[arg(long)]
    rho_t: Option<f64>,
    /// Stencil order of sma [default: 0] or truncation order of m5
    /// [default: 40].
    #[arg(long)]
    d: Option<usize>,
    /// Full (2d+1)^2 stencil of sma, row-major [default for d=0: 1].
    #[arg(long, value_name = "LIST")]
    theta: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Grid extents, e.g. 30,40.
    #[arg(long, value_name = "LIST")]
    shape: Option<String>,
    /// Master seed; omitted, one is drawn and reported on standard
    /// error.
    #[arg(long, env = "GRIDLRV_SEED")]
    seed: Option<u64>,
    /// Replication index combined with the master seed [default: 0].
    #[arg(long)]
    rep: Option<u64>,
    /// Write the compact binary field format instead of CSV.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct InputArgs {
    /// Field file to analyze.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Treat --input as the binary field format.
    #[arg(long)]
    binary_input: bool,
}

#[derive(Args)]
struct KernelArgs {
    /// Weight family: constant | bartlett | tukey | qs [default:
    /// constant].
    #[arg(long)]
    kernel: Option<String>,
    /// Bandwidth of the qs kernel [default: 6.4].
    #[arg(long)]
    bandwidth: Option<f64>,
}

#[derive(Args)]
struct CutArgs {
    /// Threshold rule: none | power-l2 | power-max | constant.
    #[arg(long)]
    cut: Option<String>,
    /// Exponent of the power rules.
    #[arg(long)]
    alpha: Option<f64>,
    /// Offset subtracted from the power thresholds [default: 1e-4].
    #[arg(long)]
    delta: Option<f64>,
    /// Fixed threshold for the constant rule.
    #[arg(long)]
    cut_value: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Truncation box, one entry per axis, e.g. 2,2.
    #[arg(long, value_name = "LIST")]
    m: Option<String>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Centering: none | mean (subtract the grand mean) | temporal
    /// (per-site time averages, axis 0) [default: none].
    #[arg(long)]
    center: Option<String>,
}

#[derive(Args)]
struct ThresholdEstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Truncation box, one entry per axis, e.g. 2,2.
    #[arg(long, value_name = "LIST")]
    m: Option<String>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    cut: CutArgs,
    /// Centering: none | mean [default: none].
    #[arg(long)]
    center: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    /// Block extents, e.g. 10,13; conflicts with --gamma.
    #[arg(long, value_name = "LIST")]
    block: Option<String>,
    /// Block exponent: extents floor(n_k^gamma) [default: 0.9].
    #[arg(long)]
    gamma: Option<f64>,
    /// Block placement strides [default: 1 per axis].
    #[arg(long, value_name = "LIST")]
    stride: Option<String>,
}

#[derive(Args)]
struct SubsampleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Truncation box of the per-block estimates.
    #[arg(long, value_name = "LIST")]
    m: Option<String>,
    /// What to report: values | distribution | mean | rmse | quantile
    /// | ci [default: values].
    #[arg(long)]
    stat: Option<String>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    cut: CutArgs,
    /// Centering for distribution / rmse / quantile [default: the
    /// full-field estimate at --m].
    #[arg(long)]
    center: Option<f64>,
    /// Quantile level in (0,1) for --stat quantile.
    #[arg(long)]
    quantile: Option<f64>,
    /// Max-norm lag shell radius for --stat ci [default: 1].
    #[arg(long)]
    ring: Option<usize>,
    /// Confidence level for --stat ci [default: 0.9].
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Ascending exponent grid starting at 0 [default: 0,0.1,...,10].
    #[arg(long, value_name = "LIST")]
    alpha_grid: Option<String>,
    /// Accepted relative loss of subsampled RMSE over exponent zero
    /// [default: 0.01].
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct SelectMArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Confidence level of the per-ring tests [default: 0.95].
    #[arg(long)]
    confidence: Option<f64>,
    /// Largest ring radius scanned [default: smallest block extent
    /// minus one].
    #[arg(long)]
    m_max: Option<usize>,
}

#[derive(Args)]
struct ImageTestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Reference image file (field format); conflicts with
    /// --null-value.
    #[arg(long, value_name = "PATH")]
    reference: Option<PathBuf>,
    /// Constant reference value [default: 0].
    #[arg(long)]
    null_value: Option<f64>,
    /// Test level in (0,1) [default: 0.05].
    #[arg(long)]
    level: Option<f64>,
    /// Truncation box of the variance estimate [default: 3,3].
    #[arg(long, value_name = "LIST")]
    m: Option<String>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    cut: CutArgs,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Preset: 1 (M1 constant-kernel sweep), 2 (M1 qs sweep), 3 (M1
    /// constant kernel with power-l2 5.8), 5 (stencil-weight sweep,
    /// four estimators), 6 (three-dimensional M4 sweep with and
    /// without cut), 8 (M1 full-field vs subsampled means and RMSEs),
    /// 10 (image-test rejection rates over an exponent grid). Presets
    /// 5, 8, and 10 take a few minutes at the default replication
    /// count.
    #[arg(long)]
    table: Option<u32>,
    /// Monte Carlo replications [default: 2000].
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed [default: 271828182845].
    #[arg(long, env = "GRIDLRV_SEED")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => BTreeMap::new(),
    };
    let format = match cli.format {
        Some(f) => f,
        None => match cfg.get("format") {
            Some(raw) => <Format as ValueEnum>::from_str(raw, true)
                .map_err(|_| Error::invalid(format!("config key `format` = `{raw}`: expected csv or json")))?,
            None => Format::Csv,
        },
    };
    let ctx = Ctx {
        out: cli.out.clone().or_else(|| cfg.get("out").map(PathBuf::from)),
        cfg,
        format,
    };
    if let Some(n) = ctx.resolve(cli.threads, "threads")? {
        if n == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::invalid(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::ThresholdEstimate(a) => cmd_threshold_estimate(&ctx, a),
        Command::Subsample(a) => cmd_subsample(&ctx, a),
        Command::Tune(a) => cmd_tune(&ctx, a),
        Command::SelectM(a) => cmd_select_m(&ctx, a),
        Command::ImageTest(a) => cmd_image_test(&ctx, a),
        Command::Reproduce(a) => cmd_reproduce(&ctx, a),
    }
}

// ---------------------------------------------------------------------------
// Configuration file and flag/file merging.

/// Every key the defaults file may set; mirrors the long flag names.
const CONFIG_KEYS: &[&str] = &[
    "a",
    "a1",
    "a2",
    "a3",
    "alpha",
    "alpha-grid",
    "bandwidth",
    "block",
    "center",
    "confidence",
    "cut",
    "cut-value",
    "d",
    "delta",
    "format",
    "gamma",
    "input",
    "kernel",
    "level",
    "m",
    "m-max",
    "model",
    "null-value",
    "out",
    "quantile",
    "reference",
    "rep",
    "reps",
    "rho",
    "rho-t",
    "ring",
    "seed",
    "shape",
    "stat",
    "stride",
    "table",
    "theta",
    "threads",
    "tolerance",
];

fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("--config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("unknown configuration key `{key}`"),
            });
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Ctx {
    cfg: BTreeMap<String, String>,
    format: Format,
    out: Option<PathBuf>,
}

impl Ctx {
    /// Flag value if given, else the parsed configuration entry.
    fn resolve<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.cfg.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::invalid(format!("config key `{key}` = `{raw}`: {e}"))),
        }
    }

    fn resolve_str(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.cfg.get(key).cloned())
    }

    fn resolve_usizes(&self, flag: &Option<String>, key: &str) -> Result<Option<Vec<usize>>> {
        match self.resolve_str(flag, key) {
            Some(s) => parse_usizes(&s, key).map(Some),
            None => Ok(None),
        }
    }

    fn resolve_f64s(&self, flag: &Option<String>, key: &str) -> Result<Option<Vec<f64>>> {
        match self.resolve_str(flag, key) {
            Some(s) => parse_f64s(&s, key).map(Some),
            None => Ok(None),
        }
    }
}

fn parse_usizes(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| {
                Error::invalid(format!("{what}: `{}` is not a nonnegative integer", t.trim()))
            })
        })
        .collect()
}

fn parse_f64s(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("{what}: `{}` is not a number", t.trim())))
        })
        .collect()
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::invalid(format!("{what} is required (flag or config file)")))
}

// ---------------------------------------------------------------------------
// Shared resolution of kernels, cuts, models, grids, and inputs.

fn resolve_kernel(ctx: &Ctx, args: &KernelArgs) -> Result<KernelSpec> {
    let name = ctx
        .resolve_str(&args.kernel, "kernel")
        .unwrap_or_else(|| "constant".into());
    let bw = ctx.resolve(args.bandwidth, "bandwidth")?.unwrap_or(6.4);
    KernelSpec::from_name(&name, bw)
}

fn resolve_cut(ctx: &Ctx, args: &CutArgs, default_rule: &str, default_alpha: f64) -> Result<CutRule> {
    let rule = ctx
        .resolve_str(&args.cut, "cut")
        .unwrap_or_else(|| default_rule.into());
    let alpha = ctx.resolve(args.alpha, "alpha")?.unwrap_or(default_alpha);
    let delta = ctx.resolve(args.delta, "delta")?.unwrap_or(DEFAULT_DELTA);
    let cut = match rule.as_str() {
        "none" => CutRule::None,
        "power-l2" | "power_l2" => CutRule::PowerL2 { alpha, delta },
        "power-max" | "power_max" => CutRule::PowerMax { alpha, delta },
        "constant" => CutRule::Constant {
            c: require(ctx.resolve(args.cut_value, "cut-value")?, "--cut-value")?,
        },
        other => {
            return Err(Error::invalid(format!(
                "--cut: unknown rule `{other}` (expected none | power-l2 | power-max | constant)"
            )))
        }
    };
    cut.validate()?;
    Ok(cut)
}

fn m1_stencil(a: Option<Vec<f64>>) -> Result<[f64; 9]> {
    match a {
        None => {
            let ModelSpec::M1 { a } = ModelSpec::m1_default() else {
                unreachable!()
            };
            Ok(a)
        }
        Some(v) if v.len() == 1 => {
            let mut s = [v[0]; 9];
            s[4] = 1.0;
            Ok(s)
        }
        Some(v) if v.len() == 9 => Ok(v.try_into().expect("length checked")),
        Some(v) => Err(Error::invalid(format!(
            "--a expects 1 or 9 values, got {}",
            v.len()
        ))),
    }
}

fn resolve_model(ctx: &Ctx, args: &ModelArgs) -> Result<ModelSpec> {
    let name = ctx
        .resolve_str(&args.model, "model")
        .unwrap_or_else(|| "m1".into());
    let a = ctx.resolve_f64s(&args.a, "a")?;
    let d = ctx.resolve(args.d, "d")?;
    let rho = ctx.resolve(args.rho, "rho")?;
    let spec = match name.as_str() {
        "m1" => ModelSpec::M1 { a: m1_stencil(a)? },
        "m2" => ModelSpec::M2 {
            a1: ctx.resolve(args.a1, "a1")?.unwrap_or(0.5),
            a2: ctx.resolve(args.a2, "a2")?.unwrap_or(0.3),
            a3: ctx.resolve(args.a3, "a3")?.unwrap_or(0.1),
        },
        "iid" => ModelSpec::Sma2d {
            d: 0,
            theta: vec![1.0],
        },
        "sma" => {
            let d = d.unwrap_or(0);
            let theta = match ctx.resolve_f64s(&args.theta, "theta")? {
                Some(t) => t,
                None if d == 0 => vec![1.0],
                None => return Err(Error::invalid("--theta is required when --d > 0")),
            };
            ModelSpec::Sma2d { d, theta }
        }
        "m4" => ModelSpec::M4 {
            rho: rho.unwrap_or(0.2),
            a: m1_stencil(a)?,
        },
        "m5" => ModelSpec::M5 {
            rho: rho.unwrap_or(0.3),
            d: d.unwrap_or(40),
        },
        "multiplicative" => ModelSpec::Multiplicative {
            rho_t: ctx.resolve(args.rho_t, "rho-t")?.unwrap_or(0.2),
            spatial: Box::new(ModelSpec::M1 { a: m1_stencil(a)? }),
        },
        other => {
            return Err(Error::invalid(format!(
                "--model: unknown family `{other}` (expected m1 | m2 | sma | iid | m4 | m5 | multiplicative)"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn load_field(ctx: &Ctx, args: &InputArgs) -> Result<(Field, PathBuf)> {
    let path = require(
        args.input
            .clone()
            .or_else(|| ctx.cfg.get("input").map(PathBuf::from)),
        "--input",
    )?;
    let file = fs::File::open(&path)
        .map_err(|e| Error::invalid(format!("--input {}: {e}", path.display())))?;
    let field = if args.binary_input {
        Field::read_binary(file)?
    } else {
        Field::read_csv(file)?
    };
    Ok((field, path))
}

fn resolve_grid(ctx: &Ctx, args: &GridArgs, shape: &[usize]) -> Result<(SubsampleGrid, String)> {
    let block = ctx.resolve_usizes(&args.block, "block")?;
    let gamma = ctx.resolve(args.gamma, "gamma")?;
    match (block, gamma) {
        (Some(_), Some(_)) => Err(Error::invalid("--block conflicts with --gamma; give one")),
        (Some(b), None) => {
            let h = ctx
                .resolve_usizes(&args.stride, "stride")?
                .unwrap_or_else(|| vec![1; shape.len()]);
            Ok((SubsampleGrid::new(shape, b, h)?, "explicit".into()))
        }
        (None, g) => {
            let gamma = g.unwrap_or(0.9);
            Ok((SubsampleGrid::with_gamma(shape, gamma)?, format!("gamma={gamma}")))
        }
    }
}

// ---------------------------------------------------------------------------
// Output rendering.

enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

struct TableOut {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl TableOut {
    fn new(columns: &[&str]) -> TableOut {
        TableOut {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    fn csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => format!("{x:.16e}"),
                    Cell::Int(i) => i.to_string(),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn json(&self) -> String {
        use serde_json::{json, Map, Value};
        let mut meta = Map::new();
        for (k, v) in &self.meta {
            meta.insert(k.clone(), Value::String(v.clone()));
        }
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                Value::Array(
                    row.iter()
                        .map(|c| match c {
                            Cell::Num(x) => serde_json::Number::from_f64(*x)
                                .map(Value::Number)
                                .unwrap_or(Value::Null),
                            Cell::Int(i) => json!(i),
                            Cell::Bool(b) => json!(b),
                            Cell::Text(t) => json!(t),
                        })
                        .collect(),
                )
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({
            "meta": Value::Object(meta),
            "columns": self.columns,
            "rows": rows,
        }))
        .expect("serializable by construction");
        s.push('\n');
        s
    }
}

fn emit(ctx: &Ctx, table: &TableOut) -> Result<()> {
    let text = match ctx.format {
        Format::Csv => table.csv(),
        Format::Json => table.json(),
    };
    match &ctx.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| Error::invalid(format!("--out {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn fmt_box(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn kernel_desc(kernel: &KernelSpec) -> String {
    match *kernel {
        KernelSpec::QuadraticSpectral { bandwidth_bw } => format!("qs(bw={bandwidth_bw})"),
        other => other.name().into(),
    }
}

fn cut_desc(cut: &CutRule) -> String {
    match *cut {
        CutRule::PowerL2 { alpha, delta } => format!("power_l2(alpha={alpha},delta={delta})"),
        CutRule::PowerMax { alpha, delta } => format!("power_max(alpha={alpha},delta={delta})"),
        CutRule::Constant { c } => format!("constant(c={c})"),
        CutRule::None => "none".into(),
    }
}

// ---------------------------------------------------------------------------
// Commands.

fn cmd_simulate(ctx: &Ctx, args: SimulateArgs) -> Result<()> {
    let spec = resolve_model(ctx, &args.model)?;
    let shape = require(ctx.resolve_usizes(&args.shape, "shape")?, "--shape")?;
    let (seed, drawn) = match ctx.resolve(args.seed, "seed")? {
        Some(s) => (s, false),
        None => (RandomState::new().build_hasher().finish(), true),
    };
    let rep = ctx.resolve(args.rep, "rep")?.unwrap_or(0);
    let field = simulate(&spec, &shape, SeedSpec::new(seed, rep))?;

    // Metadata on standard error keeps the data stream a valid field
    // file whether it goes to a pipe or to --out.
    eprintln!("# command: simulate");
    eprintln!("# model: {spec:?}");
    eprintln!("# shape: {}", fmt_box(&shape));
    eprintln!("# p: {}", field.p());
    eprintln!("# seed: {seed}{}", if drawn { " (drawn)" } else { "" });
    eprintln!("# rep: {rep}");
    eprintln!("# format: {}", if args.binary { "binary-field" } else { "csv-field" });

    match (&ctx.out, args.binary) {
        (Some(path), true) => field.write_binary(create_out(path)?),
        (Some(path), false) => field.write_csv(create_out(path)?),
        (None, true) => field.write_binary(std::io::stdout().lock()),
        (None, false) => field.write_csv(std::io::stdout().lock()),
    }
}

fn create_out(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::invalid(format!("--out {}: {e}", path.display())))
}

/// Subtracts the per-channel grand mean from every site.
fn subtract_mean(field: &Field) -> Result<Field> {
    let mean = grand_mean(field);
    let p = field.p();
    let data: Vec<f64> = field
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v - mean[i % p])
        .collect();
    Field::from_parts(field.shape().to_vec(), p, data)
}

fn estimate_table(
    command: &str,
    input: &Path,
    center: &str,
    est: &VarianceEstimate,
) -> TableOut {
    let p = est.sigma2.p();
    let names: Vec<String> = (0..p).map(|c| format!("sigma2_{c}")).collect();
    let cols: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut t = TableOut::new(&cols);
    t.meta("command", command);
    t.meta("input", input.display());
    t.meta("m", fmt_box(&est.m_used));
    t.meta("kernel", kernel_desc(&est.kernel));
    t.meta("cut", cut_desc(&est.cut));
    t.meta("center", center);
    t.meta("kept_lags", est.kept_lags);
    t.meta("rate_warning", est.rate_warning);
    t.meta("rows", format!("{p}x{p} matrix, row per line"));
    for r in 0..p {
        t.rows
            .push((0..p).map(|c| Cell::Num(est.sigma2.get(r, c))).collect());
    }
    t
}

fn cmd_estimate(ctx: &Ctx, args: EstimateArgs) -> Result<()> {
    let (field, path) = load_field(ctx, &args.input)?;
    let m = require(ctx.resolve_usizes(&args.m, "m")?, "--m")?;
    let kernel = resolve_kernel(ctx, &args.kernel)?;
    let center = ctx
        .resolve_str(&args.center, "center")
        .unwrap_or_else(|| "none".into());
    let est = match center.as_str() {
        "none" => lrv_estimate(&field, &m, kernel)?,
        "mean" => lrv_estimate(&subtract_mean(&field)?, &m, kernel)?,
        "temporal" => lrv_estimate_centered(&field, &m, kernel)?,
        other => {
            return Err(Error::invalid(format!(
                "--center: unknown mode `{other}` (expected none | mean | temporal)"
            )))
        }
    };
    emit(ctx, &estimate_table("estimate", &path, &center, &est))
}

fn cmd_threshold_estimate(ctx: &Ctx, args: ThresholdEstimateArgs) -> Result<()> {
    let (field, path) = load_field(ctx, &args.input)?;
    let m = require(ctx.resolve_usizes(&args.m, "m")?, "--m")?;
    let kernel = resolve_kernel(ctx, &args.kernel)?;
    let cut = resolve_cut(ctx, &args.cut, "power-l2", 5.8)?;
    let center = ctx
        .resolve_str(&args.center, "center")
        .unwrap_or_else(|| "none".into());
    let est = match center.as_str() {
        "none" => threshold_lrv(&field, &m, kernel, cut)?,
        "mean" => threshold_lrv(&subtract_mean(&field)?, &m, kernel, cut)?,
        other => {
            return Err(Error::invalid(format!(
                "--center: unknown mode `{other}` (expected none | mean)"
            )))
        }
    };
    emit(ctx, &estimate_table("threshold-estimate", &path, &center, &est))
}

fn cmd_subsample(ctx: &Ctx, args: SubsampleArgs) -> Result<()> {
    let (field, path) = load_field(ctx, &args.input)?;
    let (grid, grid_desc) = resolve_grid(ctx, &args.grid, field.shape())?;
    let stat = ctx
        .resolve_str(&args.stat, "stat")
        .unwrap_or_else(|| "values".into());
    let kernel = resolve_kernel(ctx, &args.kernel)?;
    let cut = resolve_cut(ctx, &args.cut, "none", 5.8)?;

    let mut t = TableOut::new(&["value"]);
    t.meta("command", "subsample");
    t.meta("input", path.display());
    t.meta("stat", &stat);
    t.meta("blocks", grid_desc);
    t.meta("b", fmt_box(grid.b()));
    t.meta("h", fmt_box(grid.h()));
    t.meta("num_blocks", grid.num_blocks());

    let need_m = || require(ctx.resolve_usizes(&args.m, "m")?, "--m");
    match stat.as_str() {
        "values" | "distribution" | "quantile" => {
            let m = need_m()?;
            t.meta("m", fmt_box(&m));
            t.meta("kernel", kernel_desc(&kernel));
            t.meta("cut", cut_desc(&cut));
            let values = subsample_values(&field, &grid, |blk| {
                Ok(threshold_lrv(blk, &m, kernel, cut)?.sigma2.scalar())
            })?;
            if stat == "values" {
                t.rows = values.iter().map(|&v| vec![Cell::Num(v)]).collect();
            } else {
                let center = match ctx.resolve(args.center, "center")? {
                    Some(c) => c,
                    None => threshold_lrv(&field, &m, kernel, cut)?.sigma2.scalar(),
                };
                let dist = empirical_distribution(&values, center, grid.tau_b())?;
                t.meta("center", format!("{center:.16e}"));
                t.meta("tau_b", format!("{:.16e}", grid.tau_b()));
                if stat == "quantile" {
                    let q = require(ctx.resolve(args.quantile, "quantile")?, "--quantile")?;
                    t.meta("quantile", q);
                    t.columns = vec!["quantile_value".into()];
                    t.rows.push(vec![Cell::Num(subsample_quantile(&dist, q)?)]);
                } else {
                    t.columns = vec!["scaled_value".into()];
                    t.rows = dist.values().iter().map(|&v| vec![Cell::Num(v)]).collect();
                }
            }
        }
        "mean" => {
            let m = need_m()?;
            reject_nonconstant_kernel(&args.kernel, &stat)?;
            t.meta("m", fmt_box(&m));
            t.meta("kernel", "constant");
            t.columns = vec!["mean".into()];
            t.rows.push(vec![Cell::Num(subsample_mean(&field, &grid, &m)?)]);
        }
        "rmse" => {
            let m = need_m()?;
            reject_nonconstant_kernel(&args.kernel, &stat)?;
            t.meta("m", fmt_box(&m));
            t.meta("kernel", "constant");
            t.meta("cut", cut_desc(&cut));
            let value = match ctx.resolve(args.center, "center")? {
                Some(c) => {
                    t.meta("center", format!("{c:.16e}"));
                    subsample_rmse_centered(&field, &grid, &m, cut, c)?
                }
                None => {
                    t.meta("center", "full-field constant-kernel estimate at m");
                    subsample_rmse(&field, &grid, &m, cut)?
                }
            };
            t.columns = vec!["rmse".into()];
            t.rows.push(vec![Cell::Num(value)]);
        }
        "ci" => {
            let ring = ctx.resolve(args.ring, "ring")?.unwrap_or(1);
            let confidence = ctx.resolve(args.confidence, "confidence")?.unwrap_or(0.9);
            t.meta("ring", ring);
            t.meta("confidence", confidence);
            let (lo, hi) = ring_confidence_interval(&field, &grid, ring, confidence)?;
            t.columns = vec!["lower".into(), "upper".into()];
            t.rows.push(vec![Cell::Num(lo), Cell::Num(hi)]);
        }
        other => {
            return Err(Error::invalid(format!(
                "--stat: unknown statistic `{other}` (expected values | distribution | mean | rmse | quantile | ci)"
            )))
        }
    }
    emit(ctx, &t)
}

/// The block-mean and block-RMSE paths always use constant weights; an
/// explicit contrary --kernel is a mistake worth surfacing.
fn reject_nonconstant_kernel(args: &KernelArgs, stat: &str) -> Result<()> {
    match args.kernel.as_deref() {
        Some(name) if name != "constant" => Err(Error::invalid(format!(
            "--kernel: --stat {stat} always uses the constant kernel"
        ))),
        _ => Ok(()),
    }
}

fn cmd_tune(ctx: &Ctx, args: TuneArgs) -> Result<()> {
    let (field, path) = load_field(ctx, &args.input)?;
    let (grid, grid_desc) = resolve_grid(ctx, &args.grid, field.shape())?;
    let alpha_grid = match ctx.resolve_f64s(&args.alpha_grid, "alpha-grid")? {
        Some(g) => g,
        None => (0..=100).map(|k| k as f64 * 0.1).collect(),
    };
    let tolerance = ctx.resolve(args.tolerance, "tolerance")?.unwrap_or(0.01);
    let report = tune_alpha_report(&field, &grid, &alpha_grid, tolerance)?;

    let mut t = TableOut::new(&["alpha", "subsampled_rmse"]);
    t.meta("command", "tune");
    t.meta("input", path.display());
    t.meta("blocks", grid_desc);
    t.meta("b", fmt_box(grid.b()));
    t.meta("tolerance", tolerance);
    t.meta("chosen_alpha", report.alpha);
    t.meta("m_opt", fmt_box(&report.m_opt));
    for (alpha, rmse) in &report.curve {
        t.rows.push(vec![Cell::Num(*alpha), Cell::Num(*rmse)]);
    }
    emit(ctx, &t)
}

fn cmd_select_m(ctx: &Ctx, args: SelectMArgs) -> Result<()> {
    let (field, path) = load_field(ctx, &args.input)?;
    let (grid, grid_desc) = resolve_grid(ctx, &args.grid, field.shape())?;
    let confidence = ctx.resolve(args.confidence, "confidence")?.unwrap_or(0.95);
    let m_max = match ctx.resolve(args.m_max, "m-max")? {
        Some(v) => v,
        None => grid.b().iter().copied().min().unwrap_or(1) - 1,
    };
    let m = select_m(&field, &grid, confidence, m_max)?;

    let names: Vec<String> = (0..m.len()).map(|k| format!("m{}", k + 1)).collect();
    let cols: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut t = TableOut::new(&cols);
    t.meta("command", "select-m");
    t.meta("input", path.display());
    t.meta("blocks", grid_desc);
    t.meta("b", fmt_box(grid.b()));
    t.meta("confidence", confidence);
    t.meta("m_max", m_max);
    t.rows.push(m.iter().map(|&v| Cell::Int(v as i64)).collect());
    emit(ctx, &t)
}

fn cmd_image_test(ctx: &Ctx, args: ImageTestArgs) -> Result<()> {
    let (field, path) = load_field(ctx, &args.input)?;
    let ref_path = args
        .reference
        .clone()
        .or_else(|| ctx.cfg.get("reference").map(PathBuf::from));
    let null_value = ctx.resolve(args.null_value, "null-value")?;
    let (reference, ref_desc) = match (ref_path, null_value) {
        (Some(_), Some(_)) => {
            return Err(Error::invalid(
                "--reference conflicts with --null-value; give one",
            ))
        }
        (Some(p), None) => {
            let file = fs::File::open(&p)
                .map_err(|e| Error::invalid(format!("--reference {}: {e}", p.display())))?;
            (Reference::Field(Field::read_csv(file)?), p.display().to_string())
        }
        (None, v) => {
            let v = v.unwrap_or(0.0);
            (Reference::Scalar(v), format!("constant {v}"))
        }
    };
    let level = ctx.resolve(args.level, "level")?.unwrap_or(0.05);
    let m = ctx
        .resolve_usizes(&args.m, "m")?
        .unwrap_or_else(|| vec![3; field.q()]);
    let kernel = resolve_kernel(ctx, &args.kernel)?;
    let cut = resolve_cut(ctx, &args.cut, "power-l2", 3.6)?;
    let res = image_test(&field, &reference, level, &m, kernel, cut)?;

    let mut t = TableOut::new(&["statistic", "sigma_hat", "critical", "level", "reject"]);
    t.meta("command", "image-test");
    t.meta("input", path.display());
    t.meta("reference", ref_desc);
    t.meta("m", fmt_box(&m));
    t.meta("kernel", kernel_desc(&kernel));
    t.meta("cut", cut_desc(&cut));
    t.rows.push(vec![
        Cell::Num(res.statistic),
        Cell::Num(res.sigma_hat),
        Cell::Num(res.critical),
        Cell::Num(res.level),
        Cell::Bool(res.reject),
    ]);
    emit(ctx, &t)
}

// ---------------------------------------------------------------------------
// Reproduction presets.

fn cmd_reproduce(ctx: &Ctx, args: ReproduceArgs) -> Result<()> {
    let table = require(ctx.resolve(args.table, "table")?, "--table")?;
    let reps = ctx.resolve(args.reps, "reps")?.unwrap_or(2000);
    let seed = ctx
        .resolve(args.seed, "seed")?
        .unwrap_or(DEFAULT_REPRODUCE_SEED);
    let out = match table {
        1 => preset_m1_sweep(1, KernelSpec::Constant, CutRule::None, reps, seed)?,
        2 => preset_m1_sweep(
            2,
            KernelSpec::QuadraticSpectral { bandwidth_bw: 6.4 },
            CutRule::None,
            reps,
            seed,
        )?,
        3 => preset_m1_sweep(3, KernelSpec::Constant, CutRule::power_l2(5.8), reps, seed)?,
        5 => preset_weight_sweep(reps, seed)?,
        6 => preset_m4_sweep(reps, seed)?,
        8 => preset_subsampling(reps, seed)?,
        10 => preset_type1_rates(reps, seed)?,
        other => {
            return Err(Error::invalid(format!(
                "--table: no preset {other} (available: 1, 2, 3, 5, 6, 8, 10)"
            )))
        }
    };
    emit(ctx, &out)
}

fn diag_boxes(hi: usize) -> Vec<Vec<usize>> {
    (0..=hi).map(|k| vec![k, k]).collect()
}

/// Truncation boxes the two-dimensional sweeps optimize over: the
/// diagonal up to (29,29) plus a handful of anisotropic pairs.
fn sweep_boxes() -> Vec<Vec<usize>> {
    let mut v = diag_boxes(29);
    for (a, b) in [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (10, 13), (15, 20)] {
        v.push(vec![a, b]);
    }
    v
}

fn report_rows(t: &mut TableOut, report: &ExperimentReport, section: Option<&str>) {
    for row in &report.rows {
        let mut cells = Vec::new();
        if let Some(s) = section {
            cells.push(Cell::Text(s.to_string()));
        }
        cells.extend([
            Cell::Text(fmt_box(&row.m)),
            Cell::Num(row.mean),
            Cell::Num(row.rmse),
            Cell::Num(row.bias),
            Cell::Num(row.variance),
        ]);
        t.rows.push(cells);
    }
}

fn preset_m1_sweep(
    preset: u32,
    kernel: KernelSpec,
    cut: CutRule,
    reps: usize,
    seed: u64,
) -> Result<TableOut> {
    let report = mc_experiment(
        &ModelSpec::m1_default(),
        &[30, 40],
        &diag_boxes(9),
        kernel,
        cut,
        reps,
        seed,
    )?;
    let mut t = TableOut::new(&["m", "mean", "rmse", "bias", "variance"]);
    t.meta("preset", preset);
    t.meta("model", &report.model);
    t.meta("shape", fmt_box(&report.shape));
    t.meta("reps", report.reps);
    t.meta("master_seed", report.master_seed);
    t.meta("kernel", kernel_desc(&report.kernel));
    t.meta("cut", cut_desc(&report.cut));
    t.meta("target_sigma2", format!("{:.16e}", report.target));
    report_rows(&mut t, &report, None);
    Ok(t)
}

/// Four estimator variants across six neighbour weights of the 3x3
/// stencil; each row reports the best truncation box and how much the
/// widest box (29,29) loses against it.
fn preset_weight_sweep(reps: usize, seed: u64) -> Result<TableOut> {
    let shape = [30usize, 40];
    let boxes = sweep_boxes();
    let qs = KernelSpec::QuadraticSpectral { bandwidth_bw: 6.4 };
    let cut = CutRule::power_l2(5.8);
    let configs: [(&str, KernelSpec, CutRule); 4] = [
        ("cw", KernelSpec::Constant, CutRule::None),
        ("cw_cut", KernelSpec::Constant, cut),
        ("qs", qs, CutRule::None),
        ("qs_cut", qs, cut),
    ];

    let mut t = TableOut::new(&[
        "a",
        "sigma2",
        "estimator",
        "m_opt",
        "rmse_opt",
        "bias_opt",
        "rmse_widest_over_opt",
    ]);
    t.meta("preset", 5);
    t.meta("shape", fmt_box(&shape));
    t.meta("reps", reps);
    t.meta("master_seed", seed);
    t.meta("boxes", "diagonal 0..29 plus anisotropic pairs");
    t.meta("cut", cut_desc(&cut));
    t.meta("qs_bandwidth", 6.4);

    for a_off in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9] {
        let mut a = [a_off; 9];
        a[4] = 1.0;
        let spec = ModelSpec::M1 { a };
        let target = spec.analytic_sigma2()?;
        for (label, kernel, cut) in &configs {
            let report = mc_experiment(&spec, &shape, &boxes, *kernel, *cut, reps, seed)?;
            let opt = report
                .rows
                .iter()
                .min_by(|x, y| x.rmse.total_cmp(&y.rmse))
                .expect("nonempty box list");
            let widest = report
                .rows
                .iter()
                .find(|r| r.m == [29, 29])
                .expect("box list contains (29,29)");
            t.rows.push(vec![
                Cell::Num(a_off),
                Cell::Num(target),
                Cell::Text(label.to_string()),
                Cell::Text(fmt_box(&opt.m)),
                Cell::Num(opt.rmse),
                Cell::Num(opt.bias),
                Cell::Num(widest.rmse / opt.rmse),
            ]);
        }
    }
    Ok(t)
}

/// Three-dimensional sweep: plain constant-kernel rows over the full
/// box ladder, then thresholded rows over the boxes below (7,7,7).
fn preset_m4_sweep(reps: usize, seed: u64) -> Result<TableOut> {
    let ModelSpec::M1 { a } = ModelSpec::m1_default() else {
        unreachable!()
    };
    let spec = ModelSpec::M4 { rho: 0.2, a };
    let shape = [20usize, 30, 40];
    let boxes: Vec<Vec<usize>> = [
        [0, 0, 0],
        [1, 1, 1],
        [1, 2, 2],
        [2, 2, 2],
        [3, 3, 3],
        [4, 4, 4],
        [5, 5, 5],
        [8, 8, 8],
        [10, 10, 10],
        [12, 12, 12],
        [15, 15, 15],
    ]
    .iter()
    .map(|b| b.to_vec())
    .collect();
    let small: Vec<Vec<usize>> = boxes
        .iter()
        .filter(|b| b.iter().all(|&v| v < 7))
        .cloned()
        .collect();
    let cut = CutRule::power_l2(9.4);

    let plain = mc_experiment(&spec, &shape, &boxes, KernelSpec::Constant, CutRule::None, reps, seed)?;
    let cutted = mc_experiment(&spec, &shape, &small, KernelSpec::Constant, cut, reps, seed)?;

    let mut t = TableOut::new(&["section", "m", "mean", "rmse", "bias", "variance"]);
    t.meta("preset", 6);
    t.meta("model", &plain.model);
    t.meta("shape", fmt_box(&shape));
    t.meta("reps", reps);
    t.meta("master_seed", seed);
    t.meta("kernel", "constant");
    t.meta("cut_section", cut_desc(&cut));
    t.meta("target_sigma2", format!("{:.16e}", plain.target));
    report_rows(&mut t, &plain, Some("plain"));
    report_rows(&mut t, &cutted, Some("cut"));
    Ok(t)
}

/// Full-field means/RMSEs next to the subsampled ones at three block
/// exponents. Subsampled deviations center at each replication's
/// full-field constant-kernel estimate at (2,2), the modal choice of
/// the sequential selection rule.
fn preset_subsampling(reps: usize, seed: u64) -> Result<TableOut> {
    let spec = ModelSpec::m1_default();
    let shape = [30usize, 40];
    let m_cols: Vec<Vec<usize>> =
        [[0, 0], [1, 1], [3, 3], [4, 4], [6, 6], [7, 7]].iter().map(|m| m.to_vec()).collect();
    let gammas = [0.7, 0.8, 0.9];

    let full = mc_experiment(
        &spec,
        &shape,
        &m_cols,
        KernelSpec::Constant,
        CutRule::None,
        reps,
        seed,
    )?;

    let grids: Vec<SubsampleGrid> = gammas
        .iter()
        .map(|&g| SubsampleGrid::with_gamma(&shape, g))
        .collect::<Result<_>>()?;
    let per_rep: Vec<Vec<(f64, f64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<(f64, f64)>> {
            let field = simulate(&spec, &shape, SeedSpec::new(seed, rep))?;
            let center = lrv_estimate(&field, &[2, 2], KernelSpec::Constant)?
                .sigma2
                .scalar();
            let mut flat = Vec::with_capacity(gammas.len() * m_cols.len());
            for grid in &grids {
                flat.extend(subsample_mean_rmse(&field, grid, &m_cols, CutRule::None, center)?);
            }
            Ok(flat)
        })
        .collect::<Result<_>>()?;
    // Accumulate in replication order so scheduling cannot perturb sums.
    let mut sums = vec![(0.0f64, 0.0f64); gammas.len() * m_cols.len()];
    for rep_row in &per_rep {
        for (acc, v) in sums.iter_mut().zip(rep_row) {
            acc.0 += v.0;
            acc.1 += v.1;
        }
    }

    let mut t = TableOut::new(&["section", "gamma", "m", "mean", "rmse"]);
    t.meta("preset", 8);
    t.meta("model", &full.model);
    t.meta("shape", fmt_box(&shape));
    t.meta("reps", reps);
    t.meta("master_seed", seed);
    t.meta("kernel", "constant");
    t.meta("target_sigma2", format!("{:.16e}", full.target));
    t.meta("sub_centering", "full-field estimate at m=2x2");
    for row in &full.rows {
        t.rows.push(vec![
            Cell::Text("full".into()),
            Cell::Text(String::new()),
            Cell::Text(fmt_box(&row.m)),
            Cell::Num(row.mean),
            Cell::Num(row.rmse),
        ]);
    }
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (mi, m) in m_cols.iter().enumerate() {
            let (mean_sum, rmse_sum) = sums[gi * m_cols.len() + mi];
            t.rows.push(vec![
                Cell::Text("sub".into()),
                Cell::Num(gamma),
                Cell::Text(fmt_box(m)),
                Cell::Num(mean_sum / reps as f64),
                Cell::Num(rmse_sum / reps as f64),
            ]);
        }
    }
    Ok(t)
}

/// Null rejection rates of the image test over a grid of threshold
/// exponents. Truncation boxes cover each model's full autocovariance
/// support (ring models reach twice their stencil order).
fn preset_type1_rates(reps: usize, seed: u64) -> Result<TableOut> {
    let alphas: Vec<f64> = (0..=9).map(|k| 3.0 + 0.1 * k as f64).collect();
    let rows_spec: Vec<(String, ModelSpec, Vec<usize>)> = vec![
        ("m2".into(), ModelSpec::m2_default(), vec![6, 6]),
        ("m5_rho0.1".into(), ModelSpec::M5 { rho: 0.1, d: 40 }, vec![8, 8]),
        ("m5_rho0.3".into(), ModelSpec::M5 { rho: 0.3, d: 40 }, vec![8, 8]),
        ("m5_rho0.5".into(), ModelSpec::M5 { rho: 0.5, d: 40 }, vec![8, 8]),
    ];

    let mut t = TableOut::new(&["model", "n", "m", "alpha", "rate"]);
    t.meta("preset", 10);
    t.meta("level", 0.05);
    t.meta("reps", reps);
    t.meta("master_seed", seed);
    t.meta("kernel", "constant");
    t.meta("cut", "power_l2 over the alpha column");
    for (label, spec, m) in &rows_spec {
        for n in [50usize, 100, 250] {
            let rates = type1_error_sweep(
                spec,
                &[n, n],
                m,
                KernelSpec::Constant,
                &alphas,
                DEFAULT_DELTA,
                0.05,
                reps,
                seed,
            )?;
            for (&alpha, &rate) in alphas.iter().zip(&rates) {
                t.rows.push(vec![
                    Cell::Text(label.clone()),
                    Cell::Int(n as i64),
                    Cell::Text(fmt_box(m)),
                    Cell::Num(alpha),
                    Cell::Num(rate),
                ]);
            }
        }
    }
    Ok(t)
}
