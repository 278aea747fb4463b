//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error, 3 numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::baselines::{self, Box2D, EvalReport, Target};
use crate::config::{Bandwidth, FitConfig};
use crate::error::{Error, ErrorKind};
use crate::gmm::{marginal_density_on_grid, marginalize, sample_gmm, DensityEvaluator};
use crate::io;
use crate::mcmarg::{fit_gmm, fit_samples_with};
use crate::projection::{grid_for, kde_density, project, GridRule};
use crate::rng::{purpose, substream};
use crate::types::{SampleBatch, UnitVector};

#[derive(Debug, Parser)]
#[command(name = "mcmarg", version, about = "Fit Gaussian mixtures by sliced KL minimization")]
pub struct Cli {
    /// Worker threads for per-direction work (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write samples from a synthetic 2-D target.
    Synth(SynthArgs),
    /// Fit a mixture to samples by gradient descent on the sliced KL.
    Fit(FitArgs),
    /// Fit a mixture to samples with expectation-maximization.
    Em(EmArgs),
    /// Draw samples from a saved mixture.
    Sample(SampleArgs),
    /// Score a mixture against samples.
    Eval(EvalArgs),
    /// Tabulate a 2-D mixture density, or a 1-D marginal along a direction.
    ExportDensity(ExportArgs),
    /// Move randomly initialized samples toward a saved mixture.
    FitSamples(FitSamplesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write a column-name header row.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub vectors: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Kernel bandwidth, or `silverman`.
    #[arg(long, default_value = "0.1")]
    pub bandwidth: String,
    #[arg(long, default_value_t = 512)]
    pub bins: usize,
    /// Grid padding around projected samples, in bandwidths.
    #[arg(long, default_value_t = 4.0)]
    pub padding: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub directions: usize,
    #[arg(long, default_value_t = 0.1)]
    pub bandwidth: f64,
    /// Cells per axis for the 2-D grid KL.
    #[arg(long, default_value_t = 200)]
    pub grid_bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// `xlo,xhi,ylo,yhi` for the 2-D table.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// Comma-separated direction for a 1-D marginal (normalized).
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<String>,
    /// Cells per axis (default 100 in 2-D, 512 in 1-D).
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub bandwidth: f64,
    #[arg(long, default_value_t = 4.0)]
    pub padding: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitSamplesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub vectors: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value = "0.1")]
    pub bandwidth: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for ten evenly spaced snapshots plus the final samples.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Em(a) => em(a),
        Command::Sample(a) => sample(a),
        Command::Eval(a) => eval(a),
        Command::ExportDensity(a) => export_density(a),
        Command::FitSamples(a) => fit_samples_cmd(a),
    })
}

fn positive(value: usize, name: &str) -> CliResult {
    if value >= 1 {
        Ok(())
    } else {
        Err(CliError::usage(format!("{name} must be ≥ 1")))
    }
}

fn parse_bandwidth(text: &str) -> CliResult<Bandwidth> {
    if text.eq_ignore_ascii_case("silverman") {
        return Ok(Bandwidth::Silverman);
    }
    match text.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(CliError::usage(format!("bandwidth must be a positive number or 'silverman', got '{text}'"))),
    }
}

fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::usage(format!("{what}: expected comma-separated numbers, got '{text}'")))
}

fn synth(a: SynthArgs) -> CliResult {
    positive(a.n, "n")?;
    let target: Target = a.target.parse()?;
    let batch = baselines::make_target(&target, a.n, &mut substream(a.seed, purpose::SYNTH, 0, 0))?;
    io::write_samples_csv(&a.out, &batch, a.header)?;
    Ok(())
}

fn fit(a: FitArgs) -> CliResult {
    positive(a.k, "k")?;
    let config = FitConfig {
        components: a.k,
        steps: a.steps,
        vectors_per_step: a.vectors,
        learning_rate: a.lr,
        bandwidth: parse_bandwidth(&a.bandwidth)?,
        grid_bins: a.bins,
        grid_padding: a.padding,
        seed: a.seed,
        ..FitConfig::default()
    };
    config.validate()?;
    let samples = io::read_samples_csv(&a.samples)?;
    let report = fit_gmm(&samples, &config)?;
    io::save_model(&a.out, &report.model)?;
    if let Some(trace) = &a.trace {
        io::write_trace_csv(trace, "loss", &report.loss_trajectory)?;
    }
    let last = report.loss_trajectory.last().copied().unwrap_or(f64::NAN);
    println!("final loss {last:.6} nats, wall time {:.2} s", report.wall_time);
    Ok(())
}

fn em(a: EmArgs) -> CliResult {
    positive(a.k, "k")?;
    positive(a.iters, "iters")?;
    let samples = io::read_samples_csv(&a.samples)?;
    let (model, trace) = baselines::em_fit(&samples, a.k, a.iters, &mut substream(a.seed, purpose::EM, 0, 0))?;
    io::save_model(&a.out, &model)?;
    if let Some(path) = &a.trace {
        io::write_trace_csv(path, "loglik", &trace)?;
    }
    println!("final mean log-likelihood {:.6}", trace.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn sample(a: SampleArgs) -> CliResult {
    positive(a.n, "n")?;
    let model = io::load_model(&a.model)?;
    let batch = sample_gmm(&model, a.n, &mut substream(a.seed, purpose::GMM_SAMPLING, 0, 0))?;
    io::write_samples_csv(&a.out, &batch, a.header)?;
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let samples = io::read_samples_csv(&a.samples)?;
    let model = io::load_model(&a.model)?;
    if samples.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: samples.dim() }.into());
    }
    let (mean, stderr) = baselines::sliced_kl_eval(&samples, &model, a.directions, a.bandwidth, a.seed)?;
    let mut report = EvalReport::default();
    report.metrics.insert("sliced_kl_mean".into(), mean);
    report.metrics.insert("sliced_kl_stderr".into(), stderr);
    report.metrics.insert("holdout_loglik".into(), baselines::holdout_loglik(&model, &samples)?);
    let meta = &mut report.metadata;
    meta.insert("seed".into(), json!(a.seed));
    meta.insert("directions".into(), json!(a.directions));
    meta.insert("bandwidth".into(), json!(a.bandwidth));
    meta.insert("dim".into(), json!(samples.dim()));
    meta.insert("samples".into(), json!(samples.count()));
    meta.insert("grid_bins_1d".into(), json!(FitConfig::default().grid_bins));
    if samples.dim() == 2 {
        let bounds = sample_box(&samples, 4.0 * a.bandwidth).union(&Box2D::around_model(&model, 4.0)?);
        let q = baselines::kde_2d_on_box(&samples, a.bandwidth, &bounds, a.grid_bins)?;
        let evaluator = DensityEvaluator::new(&model);
        let p = baselines::metrics::density_on_box(|z| evaluator.log_density(z).exp(), &bounds, a.grid_bins)?;
        let area = (bounds.x_hi - bounds.x_lo) * (bounds.y_hi - bounds.y_lo) / (a.grid_bins * a.grid_bins) as f64;
        report.metrics.insert("grid_kl_2d".into(), baselines::metrics::grid_kl_values(&q, &p, area)?);
        meta.insert("grid_kl_2d_bins".into(), json!(a.grid_bins));
        meta.insert("grid_kl_2d_box".into(), json!([bounds.x_lo, bounds.x_hi, bounds.y_lo, bounds.y_hi]));
    } else {
        meta.insert(
            "grid_kl_2d_omitted".into(),
            json!(format!("grid KL is only computed for 2-D data (dim = {})", samples.dim())),
        );
    }
    io::save_json(&a.out, &report)?;
    Ok(())
}

fn sample_box(samples: &SampleBatch, pad: f64) -> Box2D {
    let mut b = Box2D { x_lo: f64::INFINITY, x_hi: f64::NEG_INFINITY, y_lo: f64::INFINITY, y_hi: f64::NEG_INFINITY };
    for z in samples.rows() {
        b.x_lo = b.x_lo.min(z[0] - pad);
        b.x_hi = b.x_hi.max(z[0] + pad);
        b.y_lo = b.y_lo.min(z[1] - pad);
        b.y_hi = b.y_hi.max(z[1] + pad);
    }
    b
}

fn export_density(a: ExportArgs) -> CliResult {
    if let Some(direction) = &a.direction {
        let bins = a.bins.unwrap_or(512);
        let u = UnitVector::normalized(parse_list(direction, "direction")?)?;
        let rule = GridRule { bandwidth: a.bandwidth, padding: a.padding, bins };
        let density = match (&a.samples, &a.model) {
            (Some(path), None) => {
                let samples = io::read_samples_csv(path)?;
                let s = project(&samples, &u)?;
                kde_density(&s, a.bandwidth, &grid_for(&s, None, &rule)?)?
            }
            (None, Some(path)) => {
                let marginal = marginalize(&io::load_model(path)?, &u)?;
                marginal_density_on_grid(&marginal, &grid_for(&[], Some(&marginal), &rule)?)?
            }
            _ => return Err(CliError::usage("1-D export needs exactly one of --samples or --model")),
        };
        let rows = density.grid().centers().zip(density.values()).map(|(x, &v)| vec![x, v]);
        io::write_rows_csv(&a.out, "x,density", rows)?;
        return Ok(());
    }
    let bins = a.bins.unwrap_or(100);
    positive(bins, "bins")?;
    let model_path = a.model.as_ref().ok_or_else(|| CliError::usage("2-D export needs --model"))?;
    let bounds_text = a.bounds.as_ref().ok_or_else(|| CliError::usage("2-D export needs --box"))?;
    let b = parse_list(bounds_text, "box")?;
    if b.len() != 4 {
        return Err(CliError::usage("--box needs four values: xlo,xhi,ylo,yhi"));
    }
    let bounds = Box2D::new(b[0], b[1], b[2], b[3])?;
    let model = io::load_model(model_path)?;
    if model.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: model.dim() }.into());
    }
    let evaluator = DensityEvaluator::new(&model);
    let values = baselines::metrics::density_on_box(|z| evaluator.log_density(z).exp(), &bounds, bins)?;
    let gx = bounds.x_grid(bins)?;
    let gy = bounds.y_grid(bins)?;
    let rows = (0..bins * bins).map(|i| vec![gx.center(i / bins), gy.center(i % bins), values[i]]);
    io::write_rows_csv(&a.out, "x,y,density", rows)?;
    Ok(())
}

/// Steps at which snapshot `k` (of ten) is taken.
pub fn snapshot_step(k: usize, steps: usize) -> usize {
    k * steps / 10
}

pub fn snapshot_name(k: usize, step: usize) -> String {
    format!("snapshot_{k:02}_step_{step:06}.csv")
}

pub fn final_snapshot_name(step: usize) -> String {
    format!("final_step_{step:06}.csv")
}

fn fit_samples_cmd(a: FitSamplesArgs) -> CliResult {
    positive(a.n, "n")?;
    let config = FitConfig {
        steps: a.steps,
        vectors_per_step: a.vectors,
        learning_rate: a.lr,
        bandwidth: parse_bandwidth(&a.bandwidth)?,
        seed: a.seed,
        ..FitConfig::default()
    };
    config.validate()?;
    let model = io::load_model(&a.model)?;
    if let Some(dir) = &a.snapshots {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let start = Instant::now();
    let mut write_error: Option<Error> = None;
    let (samples, trace) = fit_samples_with(&model, a.n, &config, |step, batch| {
        let Some(dir) = &a.snapshots else { return };
        if write_error.is_some() {
            return;
        }
        let mut result = Ok(());
        for k in (0..10).filter(|&k| snapshot_step(k, config.steps) == step) {
            result = result.and_then(|_| io::write_samples_csv(&dir.join(snapshot_name(k, step)), batch, false));
        }
        if step == config.steps {
            result = result.and_then(|_| io::write_samples_csv(&dir.join(final_snapshot_name(step)), batch, false));
        }
        write_error = result.err();
    })?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    io::write_samples_csv(&a.out, &samples, false)?;
    if let Some(path) = &a.trace {
        io::write_trace_csv(path, "loss", &trace)?;
    }
    println!(
        "final loss {:.6} nats, wall time {:.2} s",
        trace.last().copied().unwrap_or(f64::NAN),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

