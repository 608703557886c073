//! LPBoost column generation over shapelet hypotheses.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{build_pool, Bag, InstancePool, Label, Origin, Sample};
use crate::dataset::LabelMapping;
use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelDescriptor, KernelRows, KernelSpec, PrecomputedGram};
use crate::lp::{solve_restricted_master, MasterSolution};
use crate::timeseries::Window;
use crate::weak::{NormKind, ShapeletCoeffs, WeakConfig, WeakLearner, WeightDist};

/// Weights at or below this are treated as zero duals and pruned.
const PRUNE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BoostConfig {
    pub nu: f64,
    pub epsilon_weak: f64,
    pub epsilon_stop: f64,
    pub max_iterations: usize,
    pub weak_variant: NormKind,
    pub restarts: usize,
    pub max_outer: usize,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            nu: 0.2,
            epsilon_weak: 1e-4,
            epsilon_stop: 1e-5,
            max_iterations: 200,
            weak_variant: NormKind::L1,
            restarts: 1,
            max_outer: 50,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(invalid("nu", format!("must lie in (0, 1], got {}", self.nu)));
        }
        if self.max_iterations < 1 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        if self.epsilon_stop.is_nan() || self.epsilon_stop < 0.0 {
            return Err(invalid("epsilon_stop", "must be nonnegative"));
        }
        self.weak_config().validate()
    }

    pub fn weak_config(&self) -> WeakConfig {
        WeakConfig {
            norm: self.weak_variant,
            epsilon: self.epsilon_weak,
            max_outer: self.max_outer,
            restarts: self.restarts,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The new hypothesis did not beat the current γ.
    EdgeBelowGamma,
    MaxIterations,
}

/// One pass of the column-generation loop.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Edge of the new hypothesis under the previous distribution.
    pub edge: f64,
    /// Final weak-learning objective (`−edge`).
    pub weak_objective: f64,
    pub weak_trace: Vec<f64>,
    pub weak_iterations: usize,
    /// Whether the hypothesis entered the master.
    pub accepted: bool,
    /// γ after this iteration (unchanged when the hypothesis was rejected).
    pub gamma: f64,
    /// Master diagnostics, present when the master was re-solved.
    pub master_gap: Option<f64>,
    pub simplex_violation: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedShapelet {
    pub weight: f64,
    pub coeffs: ShapeletCoeffs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunedHypothesis {
    pub iteration: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub final_gamma: f64,
    pub stop: StopReason,
    #[serde(default)]
    pub pruned: Vec<PrunedHypothesis>,
}

/// Convex combination of shapelet hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    pub shapelets: Vec<WeightedShapelet>,
    pub kernel: KernelSpec,
    pub pool: InstancePool,
    pub norm: NormKind,
    pub nu: f64,
    /// Window used to turn series into bags, for time-series models.
    pub window: Option<Window>,
    /// Raw label names behind ±1, when known.
    pub classes: Option<LabelMapping>,
    pub meta: TrainingMeta,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: EnsembleModel,
    pub history: Vec<IterationRecord>,
}

/// Training stopped because a weak-learning or master solve failed.
pub struct TrainingAborted {
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
    pub cause: Error,
}

impl fmt::Debug for TrainingAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainingAborted")
            .field("iteration", &self.iteration)
            .field("completed", &self.history.len())
            .field("cause", &self.cause)
            .finish()
    }
}

impl fmt::Display for TrainingAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "training aborted at iteration {} ({} completed): {}",
            self.iteration,
            self.history.len(),
            self.cause
        )
    }
}

/// Train on a sample, using every distinct instance as the pool.
pub fn lpboost_train(sample: &Sample, kernel: &KernelSpec, config: &BoostConfig) -> Result<TrainOutput> {
    sample.require_both_classes()?;
    let pool = build_pool(sample)?;
    lpboost_train_with_pool(sample, pool, kernel, config)
}

/// Train with a caller-supplied pool (e.g. k-means representatives).
pub fn lpboost_train_with_pool(
    sample: &Sample,
    pool: InstancePool,
    kernel: &KernelSpec,
    config: &BoostConfig,
) -> Result<TrainOutput> {
    config.validate()?;
    sample.require_both_classes()?;
    let m = sample.len();
    let labels: Vec<Label> = sample.labels().collect();
    let rows = KernelRows::compute_all(kernel, &pool, sample.bags())?;
    let learner = WeakLearner::from_rows(labels.clone(), rows, &pool, kernel, config.weak_config())?;

    let mut d = WeightDist::uniform(m);
    let mut gamma = 0.0;
    let mut hypotheses: Vec<ShapeletCoeffs> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut master: Option<MasterSolution> = None;
    let mut stop = StopReason::MaxIterations;
    let mut first_rejected: Option<ShapeletCoeffs> = None;

    let abort = |iteration: usize, history: Vec<IterationRecord>, cause: Error| {
        Error::Training(Box::new(TrainingAborted {
            iteration,
            history,
            cause,
        }))
    };

    for t in 1..=config.max_iterations {
        let started = Instant::now();
        let weak = match learner.learn(&d) {
            Ok(w) => w,
            Err(e) => return Err(abort(t, history, e)),
        };
        let edge = weak.edge;
        let mut record = IterationRecord {
            iteration: t,
            edge,
            weak_objective: *weak.objective_trace.last().expect("trace is nonempty"),
            weak_trace: weak.objective_trace.clone(),
            weak_iterations: weak.iterations,
            accepted: false,
            gamma,
            master_gap: None,
            simplex_violation: None,
            wall_seconds: 0.0,
        };
        if edge <= gamma + config.epsilon_stop {
            if hypotheses.is_empty() {
                first_rejected = Some(weak.alpha);
            }
            record.wall_seconds = started.elapsed().as_secs_f64();
            history.push(record);
            stop = StopReason::EdgeBelowGamma;
            break;
        }
        let scores = learner.scores(&weak.alpha.alpha);
        columns.push(scores.iter().zip(&labels).map(|(s, y)| y.sign() * s).collect());
        hypotheses.push(weak.alpha);
        let sol = match solve_restricted_master(&columns, config.nu) {
            Ok(s) => s,
            Err(e) => return Err(abort(t, history, e)),
        };
        gamma = sol.gamma;
        record.accepted = true;
        record.gamma = gamma;
        record.master_gap = Some(sol.duality_gap());
        record.simplex_violation = Some(sol.simplex_violation());
        d = WeightDist::new(sol.d.clone(), config.nu).map_err(|e| abort(t, history.clone(), e))?;
        record.wall_seconds = started.elapsed().as_secs_f64();
        history.push(record);
        master = Some(sol);
    }

    let mut pruned = Vec::new();
    let shapelets = match master {
        Some(sol) => {
            let mut kept = Vec::new();
            for (j, (h, &w)) in hypotheses.into_iter().zip(&sol.w).enumerate() {
                if w > PRUNE_TOL {
                    kept.push(WeightedShapelet { weight: w, coeffs: h });
                } else {
                    pruned.push(PrunedHypothesis {
                        iteration: j + 1,
                        weight: w,
                    });
                }
            }
            let total: f64 = kept.iter().map(|s| s.weight).sum();
            kept.iter_mut().for_each(|s| s.weight /= total);
            kept
        }
        // Stopped at the first iteration: keep that hypothesis alone.
        None => vec![WeightedShapelet {
            weight: 1.0,
            coeffs: first_rejected.expect("first iteration produced a hypothesis"),
        }],
    };

    let iterations = history.iter().filter(|r| r.accepted).count().max(1);
    Ok(TrainOutput {
        model: EnsembleModel {
            shapelets,
            kernel: kernel.clone(),
            pool,
            norm: config.weak_variant,
            nu: config.nu,
            window: None,
            classes: None,
            meta: TrainingMeta {
                iterations,
                final_gamma: gamma,
                stop,
                pruned,
            },
        },
        history,
    })
}

/// Contribution of one shapelet to a bag's margin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeletHit {
    /// `w_j · score`
    pub value: f64,
    pub score: f64,
    /// Within-bag index of the maximizing instance.
    pub maximizer: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub margin: f64,
    pub per_shapelet: Vec<ShapeletHit>,
}

impl EnsembleModel {
    pub fn predict(&self, bag: &Bag) -> Result<Prediction> {
        if self.shapelets.is_empty() {
            return Err(Error::EmptyModel);
        }
        if bag.is_empty() {
            return Err(Error::Validation("bag is empty".into()));
        }
        let precomputed = matches!(self.kernel, KernelSpec::Precomputed(_));
        if !precomputed {
            if let Some(inst) = bag.instances.iter().find(|i| i.dim() != self.pool.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: self.pool.dim(),
                    got: inst.dim(),
                });
            }
        }
        // Kernel values against the union of all supports, computed once.
        let mut support: Vec<usize> = self
            .shapelets
            .iter()
            .flat_map(|s| s.coeffs.nonzeros().map(|(z, _)| z))
            .collect();
        support.sort_unstable();
        support.dedup();
        let mut slot = vec![usize::MAX; self.pool.len()];
        for (k, &z) in support.iter().enumerate() {
            slot[z] = k;
        }
        let kvals: Vec<Vec<f64>> = bag
            .instances
            .iter()
            .map(|x| {
                support
                    .iter()
                    .map(|&z| self.kernel.eval(self.pool.get(z), x))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;

        let mut margin = 0.0;
        let mut per_shapelet = Vec::with_capacity(self.shapelets.len());
        for s in &self.shapelets {
            let mut best = (f64::NEG_INFINITY, 0);
            for (x, kv) in kvals.iter().enumerate() {
                let score: f64 = s.coeffs.nonzeros().map(|(z, a)| a * kv[slot[z]]).sum();
                if score > best.0 {
                    best = (score, x);
                }
            }
            let value = s.weight * best.0;
            margin += value;
            per_shapelet.push(ShapeletHit {
                value,
                score: best.0,
                maximizer: best.1,
            });
        }
        Ok(Prediction {
            label: Label::from_margin(margin),
            margin,
            per_shapelet,
        })
    }

    pub fn margins(&self, sample: &Sample) -> Result<Vec<f64>> {
        sample.bags().map(|b| self.predict(b).map(|p| p.margin)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }

    /// Parse a model document. Precomputed-kernel models need the Gram matrix.
    pub fn from_json(text: &str, gram: Option<Arc<PrecomputedGram>>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model(gram)
    }
}

pub fn predict(model: &EnsembleModel, bag: &Bag) -> Result<Prediction> {
    model.predict(bag)
}

/// Fraction of bags with `y · g(B) < ρ`.
pub fn empirical_margin_loss(model: &EnsembleModel, sample: &Sample, rho: f64) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(invalid("rho", "must be nonnegative"));
    }
    let margins = model.margins(sample)?;
    let below = margins
        .iter()
        .zip(sample.labels())
        .filter(|(g, y)| y.sign() * **g < rho)
        .count();
    Ok(below as f64 / sample.len() as f64)
}

pub const MODEL_FORMAT: &str = "shapeboost-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PoolFile {
    instances: Vec<Vec<f64>>,
    origin: Vec<Origin>,
}

#[derive(Serialize, Deserialize)]
struct ShapeletFile {
    weight: f64,
    /// Sparse `[pool index, coefficient]` pairs.
    alpha: Vec<(usize, f64)>,
}

/// On-disk model document.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernel: KernelDescriptor,
    norm: NormKind,
    nu: f64,
    #[serde(default)]
    window: Option<Window>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes: Option<LabelMapping>,
    pool: PoolFile,
    shapelets: Vec<ShapeletFile>,
    training: TrainingMeta,
}

impl ModelFile {
    fn from_model(m: &EnsembleModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kernel: m.kernel.descriptor(),
            norm: m.norm,
            nu: m.nu,
            window: m.window,
            classes: m.classes.clone(),
            pool: PoolFile {
                instances: m.pool.instances().iter().map(|i| i.values().to_vec()).collect(),
                origin: m.pool.origin().to_vec(),
            },
            shapelets: m
                .shapelets
                .iter()
                .map(|s| ShapeletFile {
                    weight: s.weight,
                    alpha: s.coeffs.nonzeros().collect(),
                })
                .collect(),
            training: m.meta.clone(),
        }
    }

    fn into_model(self, gram: Option<Arc<PrecomputedGram>>) -> Result<EnsembleModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Validation(format!(
                "not a model document: format {:?}",
                self.format
            )));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Validation(format!("unsupported model version {}", self.version)));
        }
        let kernel = KernelSpec::from_descriptor(&self.kernel, gram)?;
        let pool = InstancePool::from_parts(
            self.pool.instances.into_iter().map(Into::into).collect(),
            self.pool.origin,
        )?;
        let p = pool.len();
        let shapelets = self
            .shapelets
            .into_iter()
            .map(|s| {
                let mut alpha = vec![0.0; p];
                for (z, a) in s.alpha {
                    if z >= p {
                        return Err(Error::Validation(format!(
                            "shapelet coefficient index {z} outside pool of size {p}"
                        )));
                    }
                    alpha[z] = a;
                }
                Ok(WeightedShapelet {
                    weight: s.weight,
                    coeffs: ShapeletCoeffs::new(alpha, self.norm),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleModel {
            shapelets,
            kernel,
            pool,
            norm: self.norm,
            nu: self.nu,
            window: self.window,
            classes: self.classes,
            meta: self.training,
        })
    }
}
