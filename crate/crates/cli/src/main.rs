use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shapeboost::experiment::model_sample;
use shapeboost::report::{evaluate, report_maximizers, write_history, write_predictions, Timing};
use shapeboost::{
    cross_validate, empirical_margin_loss, load_dataset, train_pipeline, BoostConfig, DataFormat, Dataset,
    DatasetSource, EnsembleModel, ExperimentGrid, KernelChoice, LabelMapping, NormKind, PipelineConfig, WindowConfig,
};

#[derive(Parser)]
#[command(
    name = "shapeboost",
    version,
    about = "Shapelet boosting for multiple-instance and time-series data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it as JSON.
    Train(TrainCmd),
    /// Write per-bag labels and margins as CSV.
    Predict(PredictCmd),
    /// Write an evaluation report as JSON.
    Eval(EvalCmd),
    /// Grid search by repeated stratified cross-validation.
    Cv(CvCmd),
    /// Per-shapelet maximizers and weighted patterns for one bag or series.
    Report(ReportCmd),
}

#[derive(Args)]
struct DataArgs {
    /// Input format: ucr_ts, bag_csv or gram_csv.
    #[arg(long)]
    format: DataFormat,
    /// Data file; for gram_csv the square kernel matrix.
    #[arg(long)]
    data: PathBuf,
    /// gram_csv index file with rows `row,bag_id,label`.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Explicit label mapping, e.g. `1:-1,2:+1,3:+1`.
    #[arg(long, conflicts_with = "positive_label")]
    label_map: Option<String>,
    /// Map this label to +1 and every other label to -1.
    #[arg(long)]
    positive_label: Option<String>,
}

impl DataArgs {
    fn mapping(&self) -> Result<Option<LabelMapping>> {
        Ok(match (&self.label_map, &self.positive_label) {
            (Some(spec), _) => Some(LabelMapping::parse_pairs(spec)?),
            (None, Some(p)) => Some(LabelMapping::OneVsRest {
                positive: shapeboost::dataset::canonical_label(p),
            }),
            (None, None) => None,
        })
    }

    fn load(&self, fallback: Option<LabelMapping>) -> Result<Dataset> {
        let mapping = self.mapping()?.or(fallback).unwrap_or_default();
        let src = DatasetSource {
            format: self.format,
            path: self.data.clone(),
            index: self.index.clone(),
            mapping,
        };
        load_dataset(&src).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Linear,
    Gaussian,
    Precomputed,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeakArg {
    L1,
    L2,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelArg,
    /// Gaussian multiplier: k(a, b) = exp(-sigma * |a - b|^2).
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Window length as a fraction of the shortest series.
    #[arg(long, conflicts_with = "length")]
    length_frac: Option<f64>,
    /// Absolute window length.
    #[arg(long)]
    length: Option<usize>,
    /// Z-normalize each window.
    #[arg(long)]
    znorm: bool,
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    /// Number of k-means representatives; 0 keeps the full pool.
    #[arg(long, default_value_t = 100)]
    kmeans_k: usize,
    #[arg(long, default_value_t = 100)]
    kmeans_iters: usize,
    #[arg(long, value_enum, default_value = "l1")]
    weak: WeakArg,
    /// Weak-learner convergence tolerance.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Column-generation stopping tolerance on the edge.
    #[arg(long, default_value_t = 1e-5)]
    epsilon_stop: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Weak-learner restarts per iteration.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let window = match (self.length, self.length_frac) {
            (Some(l), _) => WindowConfig::fixed(l),
            (None, Some(f)) => WindowConfig::fraction(f),
            (None, None) => WindowConfig::fraction(0.2),
        }
        .with_znormalize(self.znorm);
        let kernel = match self.kernel {
            KernelArg::Linear => KernelChoice::Linear,
            KernelArg::Gaussian => KernelChoice::Gaussian { sigma: self.sigma },
            KernelArg::Precomputed => KernelChoice::Precomputed,
        };
        PipelineConfig {
            window,
            kernel,
            kmeans_k: (self.kmeans_k > 0).then_some(self.kmeans_k),
            kmeans_iters: self.kmeans_iters,
            boost: BoostConfig {
                nu: self.nu,
                epsilon_weak: self.epsilon,
                epsilon_stop: self.epsilon_stop,
                max_iterations: self.max_iter,
                weak_variant: match self.weak {
                    WeakArg::L1 => NormKind::L1,
                    WeakArg::L2 => NormKind::L2Gram,
                },
                restarts: self.restarts,
                seed: self.seed,
                ..BoostConfig::default()
            },
        }
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Model JSON output path.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct PredictCmd {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// JSON output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include prediction wall time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CvCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Comma-separated window fractions.
    #[arg(long, value_delimiter = ',')]
    length_fracs: Option<Vec<f64>>,
    /// Comma-separated ν values.
    #[arg(long, value_delimiter = ',')]
    nus: Option<Vec<f64>>,
    /// Comma-separated Gaussian σ values.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Table CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportCmd {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Zero-based bag or series index.
    #[arg(long, default_value_t = 0)]
    item: usize,
    /// JSON output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    shapelets_csv: Option<PathBuf>,
    #[arg(long)]
    patterns_csv: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Load data under the model's label mapping, then the model itself.
fn load_model_and_data(model: &Path, data: &DataArgs) -> Result<(EnsembleModel, Dataset)> {
    let text = fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", model.display()))?;
    let classes: Option<LabelMapping> = match doc.get("classes") {
        Some(v) if !v.is_null() => Some(serde_json::from_value(v.clone()).context("model label mapping")?),
        _ => None,
    };
    let dataset = data.load(classes)?;
    let model = EnsembleModel::from_json(&text, dataset.gram.clone())
        .with_context(|| format!("loading model {}", model.display()))?;
    Ok((model, dataset))
}

fn train(cmd: &TrainCmd) -> Result<()> {
    let dataset = cmd.data.load(None)?;
    let cfg = cmd.pipeline.config();
    let mut out = train_pipeline(&dataset.data, dataset.gram.as_ref(), &cfg).context("training")?;
    out.model.classes = Some(dataset.mapping.clone());
    fs::write(&cmd.out, out.model.to_json()?).with_context(|| format!("writing {}", cmd.out.display()))?;
    if let Some(path) = &cmd.history {
        write_history(&out.history, output(Some(path))?)?;
    }
    let sample = model_sample(&out.model, &dataset.data)?;
    let loss = empirical_margin_loss(&out.model, &sample, 0.0)?;
    eprintln!(
        "trained {} shapelets in {} iterations; training accuracy {:.4}",
        out.model.shapelets.len(),
        out.model.meta.iterations,
        1.0 - loss
    );
    Ok(())
}

fn predict(cmd: &PredictCmd) -> Result<()> {
    let (model, dataset) = load_model_and_data(&cmd.model, &cmd.data)?;
    let mut out = output(cmd.out.as_deref())?;
    write_predictions(&model, &dataset.data, &mut out)?;
    out.flush()?;
    Ok(())
}

fn eval(cmd: &EvalCmd) -> Result<()> {
    let (model, dataset) = load_model_and_data(&cmd.model, &cmd.data)?;
    let start = Instant::now();
    let mut report = evaluate(&model, &dataset.data)?;
    if cmd.timing {
        report.timing = Some(Timing {
            predict_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let mut out = output(cmd.out.as_deref())?;
    writeln!(out, "{}", report.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn cv(cmd: &CvCmd) -> Result<()> {
    let dataset = cmd.data.load(None)?;
    let base = cmd.pipeline.config();
    let defaults = ExperimentGrid::default();
    let grid = ExperimentGrid {
        length_fractions: cmd.length_fracs.clone().unwrap_or(defaults.length_fractions),
        nus: cmd.nus.clone().unwrap_or(defaults.nus),
        sigmas: cmd.sigmas.clone().unwrap_or(defaults.sigmas),
        folds: cmd.folds,
        repeats: cmd.repeats,
        seed: cmd.pipeline.seed,
    };
    let result = cross_validate(&dataset.data, dataset.gram.as_ref(), &base, &grid).context("cross-validation")?;
    let mut out = output(cmd.out.as_deref())?;
    result.write_csv(&mut out)?;
    out.flush()?;
    let best = &result.best;
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    eprintln!(
        "best: length_fraction {} nu {} sigma {}",
        fmt(best.length_fraction),
        best.nu,
        fmt(best.sigma)
    );
    Ok(())
}

fn report(cmd: &ReportCmd) -> Result<()> {
    let (model, dataset) = load_model_and_data(&cmd.model, &cmd.data)?;
    let report = report_maximizers(&model, &dataset.data, cmd.item)?;
    if let Some(path) = &cmd.shapelets_csv {
        report.write_shapelets_csv(output(Some(path))?)?;
    }
    if let Some(path) = &cmd.patterns_csv {
        report.write_patterns_csv(output(Some(path))?)?;
    }
    let mut out = output(cmd.out.as_deref())?;
    writeln!(out, "{}", report.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(c) => train(c),
        Command::Predict(c) => predict(c),
        Command::Eval(c) => eval(c),
        Command::Cv(c) => cv(c),
        Command::Report(c) => report(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
