//! Training pipeline and repeated stratified cross-validation.

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boost::{lpboost_train_with_pool, BoostConfig, EnsembleModel, Prediction, TrainOutput};
use crate::data::{build_pool, Bag, Label, Sample};
use crate::dataset::Data;
use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelSpec, PrecomputedGram};
use crate::kmeans::kmeans_representatives;
use crate::timeseries::{extract_sample, WindowConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelChoice {
    Linear,
    Gaussian { sigma: f64 },
    Precomputed,
}

impl KernelChoice {
    pub fn build(&self, gram: Option<&Arc<PrecomputedGram>>) -> Result<KernelSpec> {
        match *self {
            KernelChoice::Linear => Ok(KernelSpec::Linear),
            KernelChoice::Gaussian { sigma } => KernelSpec::gaussian(sigma),
            KernelChoice::Precomputed => gram
                .cloned()
                .map(KernelSpec::Precomputed)
                .ok_or_else(|| invalid("kernel", "precomputed kernel needs a gram matrix")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Applied to series data; ignored for bag data.
    pub window: WindowConfig,
    pub kernel: KernelChoice,
    /// Reduce the pool to this many k-means centroids.
    pub kmeans_k: Option<usize>,
    pub kmeans_iters: usize,
    pub boost: BoostConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: WindowConfig::fraction(0.2),
            kernel: KernelChoice::Gaussian { sigma: 1.0 },
            kmeans_k: Some(100),
            kmeans_iters: 100,
            boost: BoostConfig::default(),
        }
    }
}

/// Window extraction, pool construction, optional k-means, then boosting.
pub fn train_pipeline(data: &Data, gram: Option<&Arc<PrecomputedGram>>, cfg: &PipelineConfig) -> Result<TrainOutput> {
    let kernel = cfg.kernel.build(gram)?;
    let (sample, window) = match data {
        Data::Series(series) => {
            let s = extract_sample(series, &cfg.window)?;
            (s.sample, Some(s.window))
        }
        Data::Bags(sample) => (sample.clone(), None),
    };
    sample.require_both_classes()?;
    let mut pool = build_pool(&sample)?;
    if let Some(k) = cfg.kmeans_k {
        if matches!(kernel, KernelSpec::Precomputed(_)) {
            return Err(invalid(
                "kmeans_k",
                "k-means needs explicit feature vectors, not a precomputed kernel",
            ));
        }
        pool = kmeans_representatives(&pool, k, cfg.boost.seed, cfg.kmeans_iters)?;
    }
    let mut out = lpboost_train_with_pool(&sample, pool, &kernel, &cfg.boost)?;
    out.model.window = window;
    Ok(out)
}

/// Bags as the model sees them: series are cut with the model's window.
pub fn model_bags(model: &EnsembleModel, data: &Data) -> Result<Vec<Bag>> {
    match data {
        Data::Series(series) => {
            let window = model
                .window
                .ok_or_else(|| Error::Validation("model was not trained on time series".into()))?;
            series.iter().map(|t| window.extract(t)).collect()
        }
        Data::Bags(sample) => Ok(sample.bags().cloned().collect()),
    }
}

pub fn predict_data(model: &EnsembleModel, data: &Data) -> Result<Vec<Prediction>> {
    model_bags(model, data)?.iter().map(|b| model.predict(b)).collect()
}

/// Sample view of labeled data under the model's window.
pub fn model_sample(model: &EnsembleModel, data: &Data) -> Result<Sample> {
    let labels = data.labels()?;
    Sample::new(
        model_bags(model, data)?
            .into_iter()
            .zip(labels)
            .map(|(b, y)| crate::data::LabeledBag::new(b, y))
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentGrid {
    pub length_fractions: Vec<f64>,
    pub nus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            length_fractions: vec![0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
            nus: vec![0.1, 0.2],
            sigmas: (1..=20).map(|i| i as f64 / 200.0).collect(),
            folds: 5,
            repeats: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub length_fraction: Option<f64>,
    pub nu: f64,
    pub sigma: Option<f64>,
}

impl GridCell {
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        if let Some(f) = self.length_fraction {
            cfg.window = WindowConfig {
                length: None,
                length_fraction: Some(f),
                znormalize: base.window.znormalize,
            };
        }
        if let Some(sigma) = self.sigma {
            cfg.kernel = KernelChoice::Gaussian { sigma };
        }
        cfg.boost.nu = self.nu;
        cfg
    }

    /// Smaller σ, then smaller ℓ, then smaller ν come first.
    fn tie_key(&self) -> (f64, f64, f64) {
        (self.sigma.unwrap_or(0.0), self.length_fraction.unwrap_or(0.0), self.nu)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    #[serde(flatten)]
    pub cell: GridCell,
    pub mean: f64,
    /// Sample standard deviation over repeats.
    pub stdev: f64,
    /// Pooled accuracy of each repeat over all its folds.
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvResult {
    pub best: GridCell,
    pub table: Vec<CellResult>,
}

impl CvResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["length_fraction", "nu", "sigma", "mean", "stdev"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.table {
            w.write_record([
                opt(r.cell.length_fraction),
                r.cell.nu.to_string(),
                opt(r.cell.sigma),
                r.mean.to_string(),
                r.stdev.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of repeat `r`.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fold id of every item. Each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(invalid("folds", "must be at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; labels.len()];
    let mut next = 0;
    for class in [Label::Negative, Label::Positive] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::Validation(format!(
                "class {class} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            assign[i] = next % folds;
            next += 1;
        }
    }
    Ok(assign)
}

fn grid_cells(data: &Data, base: &PipelineConfig, grid: &ExperimentGrid) -> Result<Vec<GridCell>> {
    if grid.nus.is_empty() {
        return Err(invalid("nus", "grid list is empty"));
    }
    if grid.repeats < 1 {
        return Err(invalid("repeats", "must be at least 1"));
    }
    let fractions: Vec<Option<f64>> = match data {
        Data::Series(_) if grid.length_fractions.is_empty() => {
            return Err(invalid("length_fractions", "grid list is empty"))
        }
        Data::Series(_) => grid.length_fractions.iter().copied().map(Some).collect(),
        Data::Bags(_) => vec![None],
    };
    let sigmas: Vec<Option<f64>> = match base.kernel {
        KernelChoice::Gaussian { .. } if grid.sigmas.is_empty() => return Err(invalid("sigmas", "grid list is empty")),
        KernelChoice::Gaussian { .. } => grid.sigmas.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut cells = Vec::new();
    for &length_fraction in &fractions {
        for &sigma in &sigmas {
            for &nu in &grid.nus {
                cells.push(GridCell {
                    length_fraction,
                    nu,
                    sigma,
                });
            }
        }
    }
    Ok(cells)
}

fn mean_stdev(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Grid search by `repeats` runs of stratified `folds`-fold cross-validation.
pub fn cross_validate(
    data: &Data,
    gram: Option<&Arc<PrecomputedGram>>,
    base: &PipelineConfig,
    grid: &ExperimentGrid,
) -> Result<CvResult> {
    let cells = grid_cells(data, base, grid)?;
    let labels = data.labels()?;
    let assignments = (0..grid.repeats)
        .map(|r| stratified_folds(&labels, grid.folds, repeat_seed(grid.seed, r)))
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.repeats).flat_map(move |r| (0..grid.folds).map(move |f| (c, r, f))))
        .collect();
    let correct = tasks
        .par_iter()
        .map(|&(c, r, f)| {
            let fold = &assignments[r];
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
            let mut cfg = cells[c].apply(base);
            cfg.boost.seed = repeat_seed(base.boost.seed, r);
            let model = train_pipeline(&data.subset(&train)?, gram, &cfg)?.model;
            let preds = predict_data(&model, &data.subset(&test)?)?;
            Ok(preds.iter().zip(&test).filter(|(p, &i)| p.label == labels[i]).count())
        })
        .collect::<Result<Vec<usize>>>()?;

    let per_cell = grid.repeats * grid.folds;
    let table: Vec<CellResult> = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let accuracies: Vec<f64> = (0..grid.repeats)
                .map(|r| {
                    let start = c * per_cell + r * grid.folds;
                    correct[start..start + grid.folds].iter().sum::<usize>() as f64 / labels.len() as f64
                })
                .collect();
            let (mean, stdev) = mean_stdev(&accuracies);
            CellResult {
                cell: *cell,
                mean,
                stdev,
                accuracies,
            }
        })
        .collect();

    let best = table
        .iter()
        .min_by(|a, b| {
            b.mean.total_cmp(&a.mean).then_with(|| {
                let (ka, kb) = (a.cell.tie_key(), b.cell.tie_key());
                ka.0.total_cmp(&kb.0)
                    .then(ka.1.total_cmp(&kb.1))
                    .then(ka.2.total_cmp(&kb.2))
            })
        })
        .expect("grid has at least one cell")
        .cell;
    Ok(CvResult { best, table })
}
