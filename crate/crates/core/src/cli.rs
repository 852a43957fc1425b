//! The `parafit` command-line application.
//!
//! Exit codes: 0 converged (or success), 1 fit failed, 2 usage error,
//! 3 data or I/O error. With verbosity 0 standard output carries only the
//! path of the file written (or the NLL value for `eval-nll`), plus the
//! timing block when `--timing` is given. Diagnostics go to standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::amplitude::{DecayChannel, GridSpec, Pair, Spin};
use crate::dataset::{DataSet, RangePolicy, UnbinnedDataSet};
use crate::engine::{Backend, Engine, WORKERS_ENV};
use crate::error::{Error, Result};
use crate::fit::{FitManager, FitOptions, FitResult, FitStatus};
use crate::mcgen::{self, GenSpec};
use crate::pdf::{PdfId, PdfTree, ResonanceTerm};
use crate::variable::{Registry, VarId, Variable};

/// Points written by `--dump-curve`.
pub const CURVE_POINTS: usize = 1000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit a gaussian to one column of a CSV file.
    FitGaussian,
    /// Fit an exponential to one column of a CSV file.
    FitExp,
    /// Fit the complex coefficients of a Dalitz model to (s12, s13) events.
    FitDalitz,
    /// Write a toy sample as CSV.
    Generate,
    /// Print the negative log-likelihood of a dataset at fixed parameters.
    EvalNll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum BackendChoice {
    #[default]
    Serial,
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum PdfChoice {
    #[default]
    Gaussian,
    Exponential,
    Dalitz,
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "parafit", version, about = "Parallel maximum-likelihood fitting")]
pub struct AppConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Input events (CSV with a header row).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Dalitz model description (JSON).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output file: fit result JSON, or CSV for `generate`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Pool threads; 0 means one per core.
    #[arg(short = 'j', long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Static dataset shards (or generator streams).
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = BackendChoice::Serial)]
    pub backend: BackendChoice,
    /// Events to generate.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub events: usize,
    /// More output on standard error; repeat up to three times.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Print a timing block on standard output.
    #[arg(long, global = true)]
    pub timing: bool,
    /// Write the fitted density as (x, density) CSV.
    #[arg(long, global = true)]
    pub dump_curve: Option<PathBuf>,
    #[arg(long, global = true)]
    pub no_color: bool,
    #[arg(long, global = true)]
    pub max_calls: Option<u64>,
    /// Density for `generate` and `eval-nll`.
    #[arg(long, global = true, value_enum, default_value_t = PdfChoice::Gaussian)]
    pub pdf: PdfChoice,
    /// Name of the observable column.
    #[arg(long, global = true, default_value = "x")]
    pub obs: String,
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub lower: f64,
    #[arg(long, global = true, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper: f64,
    /// Gaussian mean (start value, truth, or evaluation point).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Exponential slope.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
}

impl AppConfig {
    pub fn verbosity(&self) -> u8 {
        self.verbose.min(3)
    }

    pub fn gen_spec(&self) -> GenSpec {
        GenSpec::new(self.events, self.seed).with_streams(self.workers as usize)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn workers(&self) -> usize {
        self.workers as usize
    }

    fn data_path(&self) -> std::result::Result<&Path, UsageError> {
        self.data
            .as_deref()
            .ok_or_else(|| UsageError::new("--data is required for this subcommand"))
    }

    fn model_path(&self) -> std::result::Result<&Path, UsageError> {
        self.model
            .as_deref()
            .ok_or_else(|| UsageError::new("--model is required for Dalitz models"))
    }
}

/// A command line that could not be parsed, or a request for help.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError {
    pub message: String,
    pub exit_code: i32,
}

impl UsageError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            exit_code: EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for UsageError {}

/// Parses arguments (without the program name). `--help` and `--version`
/// come back as a `UsageError` with exit code 0 and the text to print.
pub fn parse_args<I, T>(args: I) -> std::result::Result<AppConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv = std::iter::once(OsString::from("parafit")).chain(args.into_iter().map(Into::into));
    let cfg = AppConfig::try_parse_from(argv).map_err(|e| {
        let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        UsageError {
            message: e.render().to_string(),
            exit_code: code,
        }
    })?;
    if !(cfg.lower < cfg.upper) {
        return Err(UsageError::new("--lower must be below --upper"));
    }
    Ok(cfg)
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_)
        | Error::Parse(_)
        | Error::OutOfRange { .. }
        | Error::ShapeMismatch { .. }
        | Error::UnknownObservable
        | Error::EmptyDataSet
        | Error::DuplicateName(_)
        | Error::InvalidVariable(_)
        | Error::UnboundedObservable(_)
        | Error::InvalidModel(_)
        | Error::DegenerateGrid(_) => EXIT_DATA,
        Error::OutOfBounds { .. } | Error::InvalidBackend(_) => EXIT_USAGE,
        _ => EXIT_FIT_FAILED,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParameterRecord {
    pub name: String,
    pub value: f64,
    pub error: f64,
    pub fixed: bool,
}

/// The JSON result document. `nll` and `edm` are `null` when the fit never
/// produced a finite value; `covariance` is row-major over `parameters`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub status: String,
    pub nll: Option<f64>,
    pub edm: Option<f64>,
    pub n_calls: u64,
    pub wall_time_s: f64,
    pub parameters: Vec<ParameterRecord>,
    pub covariance: Vec<f64>,
}

impl ResultDocument {
    pub fn from_result(r: &FitResult) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        let n = r.values.len();
        Self {
            status: r.status.as_str().to_string(),
            nll: finite(r.nll_min),
            edm: finite(r.edm),
            n_calls: r.n_calls,
            wall_time_s: r.wall_time_s,
            parameters: (0..n)
                .map(|i| ParameterRecord {
                    name: r.names[i].clone(),
                    value: r.values[i],
                    error: r.errors[i],
                    fixed: r.fixed[i],
                })
                .collect(),
            covariance: (0..n * n).map(|k| r.covariance[(k / n, k % n)]).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn write_result(result: &FitResult, path: &Path) -> Result<()> {
    let text = ResultDocument::from_result(result).to_json()?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ChannelRecord {
    pub mother: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FixedFlags {
    pub mass: Option<bool>,
    pub width: Option<bool>,
    pub magnitude: Option<bool>,
    pub phase: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ResonanceRecord {
    pub name: String,
    /// `"12"`, `"13"` or `"23"`.
    pub pair: String,
    pub spin: u32,
    pub mass: f64,
    pub width: f64,
    pub magnitude: f64,
    pub phase: f64,
    /// Masses and widths default to fixed; magnitude and phase default to
    /// fixed for the first resonance only, which sets the overall scale and
    /// phase convention.
    #[serde(default)]
    pub fixed: FixedFlags,
}

/// Dalitz model file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DalitzModelFile {
    pub channel: ChannelRecord,
    /// Integration grid nodes per axis.
    #[serde(default)]
    pub grid: Option<usize>,
    pub resonances: Vec<ResonanceRecord>,
}

impl DalitzModelFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidModel(format!("{}: {e}", path.display())))
    }
}

/// A model bound to a fresh registry.
pub struct BuiltModel {
    pub registry: Registry,
    pub tree: PdfTree,
    pub root: PdfId,
    pub observables: Vec<VarId>,
}

pub fn build_dalitz(model: &DalitzModelFile) -> Result<BuiltModel> {
    let c = &model.channel;
    let channel = DecayChannel::new(c.mother, c.m1, c.m2, c.m3)?;
    let mut reg = Registry::new();
    let (a12, b12) = channel.s12_range();
    let (a13, b13) = channel.s13_range();
    let s12 = reg.add(Variable::observable("s12", a12, b12))?;
    let s13 = reg.add(Variable::observable("s13", a13, b13))?;
    let mut terms = Vec::with_capacity(model.resonances.len());
    for (i, r) in model.resonances.iter().enumerate() {
        let pair: Pair = r.pair.parse()?;
        let spin = Spin::try_from(r.spin)?;
        let f = r.fixed;
        let mass = reg.add(
            Variable::parameter(format!("{}_mass", r.name), r.mass)
                .with_bounds(0.0, f64::INFINITY)
                .fixed(f.mass.unwrap_or(true)),
        )?;
        let width = reg.add(
            Variable::parameter(format!("{}_width", r.name), r.width)
                .with_bounds(0.0, f64::INFINITY)
                .fixed(f.width.unwrap_or(true)),
        )?;
        let magnitude = reg.add(
            Variable::parameter(format!("{}_magnitude", r.name), r.magnitude)
                .with_bounds(0.0, f64::INFINITY)
                .fixed(f.magnitude.unwrap_or(i == 0)),
        )?;
        let phase = reg.add(
            Variable::parameter(format!("{}_phase", r.name), r.phase)
                .with_step(0.1)
                .fixed(f.phase.unwrap_or(i == 0)),
        )?;
        terms.push(ResonanceTerm {
            name: r.name.clone(),
            pair,
            spin,
            mass,
            width,
            magnitude,
            phase,
        });
    }
    let grid = model.grid.map_or_else(GridSpec::default, GridSpec::square);
    let mut tree = PdfTree::new();
    let root = tree.dalitz(&reg, "dalitz", s12, s13, channel, terms, grid)?;
    Ok(BuiltModel {
        registry: reg,
        tree,
        root,
        observables: vec![s12, s13],
    })
}

fn build_1d(cfg: &AppConfig, kind: PdfChoice) -> Result<BuiltModel> {
    let (lo, hi) = (cfg.lower, cfg.upper);
    let span = hi - lo;
    let mut reg = Registry::new();
    let x = reg.add(Variable::observable(cfg.obs.clone(), lo, hi))?;
    let mut tree = PdfTree::new();
    let root = match kind {
        PdfChoice::Gaussian => {
            let mu = reg.add(
                Variable::parameter("mu", cfg.mu.unwrap_or(lo + 0.5 * span))
                    .with_bounds(lo, hi)
                    .with_step(span / 100.0),
            )?;
            let sigma = reg.add(
                Variable::parameter("sigma", cfg.sigma.unwrap_or(span / 10.0))
                    .with_bounds(span * 1e-6, span)
                    .with_step(span / 100.0),
            )?;
            tree.gaussian(&reg, "gaussian", x, mu, sigma)?
        }
        PdfChoice::Exponential => {
            let alpha = reg.add(Variable::parameter("alpha", cfg.alpha.unwrap_or(-1.0)).with_step(0.1))?;
            tree.exponential(&reg, "exponential", x, alpha)?
        }
        PdfChoice::Dalitz => unreachable!("Dalitz models come from a model file"),
    };
    Ok(BuiltModel {
        registry: reg,
        tree,
        root,
        observables: vec![x],
    })
}

fn build_model(cfg: &AppConfig, kind: PdfChoice) -> std::result::Result<Result<BuiltModel>, UsageError> {
    Ok(match kind {
        PdfChoice::Dalitz => {
            let path = cfg.model_path()?;
            DalitzModelFile::read(path).and_then(|m| build_dalitz(&m))
        }
        _ => build_1d(cfg, kind),
    })
}

fn backend(cfg: &AppConfig) -> Result<Backend> {
    match cfg.backend {
        BackendChoice::Serial => Ok(Backend::serial()),
        BackendChoice::Pool => {
            if std::env::var_os(WORKERS_ENV).is_some() {
                Backend::from_env(Backend::serial())
            } else {
                Backend::pool(cfg.threads)
            }
        }
    }
}

fn load_data(path: &Path, model: &BuiltModel) -> Result<UnbinnedDataSet> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    UnbinnedDataSet::read_csv(
        BufReader::new(file),
        &model.registry,
        &model.observables,
        RangePolicy::Strict,
    )
}

fn write_curve(path: &Path, model: &BuiltModel) -> Result<()> {
    let x = model.observables[0];
    let var = model.registry.get(x);
    let (lo, hi) = (var.lower(), var.upper());
    let snap = model.registry.snapshot();
    let norms = model.tree.resolve_norms(model.root, &snap)?;
    let eval = crate::pdf::Evaluator::new(&model.tree, &snap, &norms);
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([var.name(), "density"]).map_err(io)?;
    for i in 0..CURVE_POINTS {
        let xi = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
        let d = eval.density_at(model.root, &[(x, xi)])?;
        w.write_record([xi.to_string(), d.to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Default)]
struct Timing {
    data_load: Duration,
    normalization: Duration,
    minimization: Duration,
    total: Duration,
}

impl Timing {
    fn print(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "timing:")?;
        for (label, d) in [
            ("data-load", self.data_load),
            ("normalization", self.normalization),
            ("minimization", self.minimization),
            ("total", self.total),
        ] {
            writeln!(out, "  {label:<14} {:.6} s", d.as_secs_f64())?;
        }
        Ok(())
    }
}

fn use_color(cfg: &AppConfig) -> bool {
    !cfg.no_color && std::env::var_os("NO_COLOR").is_none() && std::io::stderr().is_terminal()
}

fn report(cfg: &AppConfig, result: &FitResult) {
    if cfg.verbosity() == 0 {
        return;
    }
    let status = result.status.as_str();
    let status = if use_color(cfg) {
        let code = if result.status == FitStatus::Converged {
            32
        } else {
            31
        };
        format!("\x1b[{code}m{status}\x1b[0m")
    } else {
        status.to_string()
    };
    eprintln!(
        "status: {status}  nll: {}  edm: {:.3e}  calls: {}",
        result.nll_min, result.edm, result.n_calls
    );
    for i in 0..result.names.len() {
        let note = if result.fixed[i] {
            " (fixed)"
        } else if result.at_limit[i] {
            " (at limit)"
        } else {
            ""
        };
        eprintln!(
            "  {:<20} {:>14.8} +/- {:.3e}{note}",
            result.names[i], result.values[i], result.errors[i]
        );
    }
}

enum Outcome {
    Done,
    FitFailed,
}

fn execute(cfg: &AppConfig) -> std::result::Result<Result<Outcome>, UsageError> {
    let start = Instant::now();
    let mut timing = Timing::default();
    let mut stdout = std::io::stdout().lock();
    let result = match cfg.command {
        Command::FitGaussian | Command::FitExp | Command::FitDalitz => {
            let kind = match cfg.command {
                Command::FitGaussian => PdfChoice::Gaussian,
                Command::FitExp => PdfChoice::Exponential,
                _ => PdfChoice::Dalitz,
            };
            let data_path = cfg.data_path()?.to_path_buf();
            let model = build_model(cfg, kind)?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("result.json"));
            (|| -> Result<Outcome> {
                let mut model = model?;
                let backend = backend(cfg)?;
                let t0 = Instant::now();
                let data: DataSet = load_data(&data_path, &model)?.into();
                timing.data_load = t0.elapsed();
                let options = FitOptions {
                    max_calls: cfg.max_calls,
                    ..FitOptions::default()
                };
                let fit = FitManager::new(&model.tree, model.root, &data)
                    .backend(backend)
                    .workers(cfg.workers())
                    .options(options)
                    .run(&mut model.registry)?;
                timing.normalization = fit.timing.normalization;
                timing.minimization = fit.timing.minimization;
                report(cfg, &fit);
                write_result(&fit, &out)?;
                if let Some(curve) = &cfg.dump_curve {
                    if kind == PdfChoice::Dalitz {
                        log::warn!("--dump-curve applies to one-dimensional fits only");
                    } else {
                        write_curve(curve, &model)?;
                    }
                }
                writeln!(stdout, "{}", out.display())?;
                Ok(if fit.status == FitStatus::Converged {
                    Outcome::Done
                } else {
                    Outcome::FitFailed
                })
            })()
        }
        Command::Generate => {
            let model = build_model(cfg, cfg.pdf)?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("events.csv"));
            (|| -> Result<Outcome> {
                let model = model?;
                let spec = cfg.gen_spec();
                let ds = match cfg.pdf {
                    PdfChoice::Dalitz => {
                        mcgen::generate_dalitz_node(&model.tree, model.root, &model.registry, &spec)?
                    }
                    _ => mcgen::generate_1d(
                        &model.tree,
                        model.root,
                        &model.registry,
                        model.observables[0],
                        &spec,
                    )?,
                };
                let file = File::create(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
                ds.write_csv(BufWriter::new(file))?;
                log::info!("wrote {} events", ds.len());
                writeln!(stdout, "{}", out.display())?;
                Ok(Outcome::Done)
            })()
        }
        Command::EvalNll => {
            let data_path = cfg.data_path()?.to_path_buf();
            let model = build_model(cfg, cfg.pdf)?;
            (|| -> Result<Outcome> {
                let model = model?;
                let t0 = Instant::now();
                let data = load_data(&data_path, &model)?;
                timing.data_load = t0.elapsed();
                let mut engine = Engine::new(backend(cfg)?);
                let t1 = Instant::now();
                let nll = engine.nll(&model.tree, model.root, &data, &model.registry.snapshot())?;
                timing.minimization = t1.elapsed();
                timing.normalization = engine.store().stats().normalization_time;
                writeln!(stdout, "{nll}")?;
                Ok(Outcome::Done)
            })()
        }
    };
    timing.total = start.elapsed();
    if cfg.timing && result.is_ok() {
        let _ = timing.print(&mut stdout);
    }
    Ok(result)
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs a parsed configuration and returns the process exit code.
pub fn run(cfg: &AppConfig) -> i32 {
    match execute(cfg) {
        Err(usage) => {
            eprintln!("error: {usage}");
            usage.exit_code
        }
        Ok(Ok(Outcome::Done)) => EXIT_OK,
        Ok(Ok(Outcome::FitFailed)) => EXIT_FIT_FAILED,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary: parse, set up logging, run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(args) {
        Ok(cfg) => {
            init_logging(cfg.verbosity());
            run(&cfg)
        }
        Err(e) if e.exit_code == EXIT_OK => {
            print!("{}", e.message);
            EXIT_OK
        }
        Err(e) => {
            eprint!("{}", e.message);
            e.exit_code
        }
    }
}
