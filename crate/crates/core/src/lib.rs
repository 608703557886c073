//! Shapelet learning for multiple-instance and time-series classification
//! by LPBoost column generation with a DC-programming weak learner.

pub mod boost;
pub mod data;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod kmeans;
pub mod lp;
pub mod report;
pub mod synthetic;
pub mod timeseries;
pub mod weak;

pub use boost::{
    empirical_margin_loss, lpboost_train, lpboost_train_with_pool, predict, BoostConfig, EnsembleModel,
    IterationRecord, Prediction, TrainOutput,
};
pub use data::{build_pool, Bag, Instance, InstancePool, Label, LabeledBag, Origin, Sample};
pub use dataset::{load_dataset, Data, DataFormat, Dataset, DatasetSource, LabelMapping};
pub use error::{Error, Result};
pub use experiment::{cross_validate, train_pipeline, ExperimentGrid, KernelChoice, PipelineConfig};
pub use kernel::{gram_matrix, KernelSpec, PrecomputedGram};
pub use kmeans::kmeans_representatives;
pub use timeseries::{extract_bag, extract_sample, TimeSeries, Window, WindowConfig};
pub use weak::{dc_weak_learn, NormKind, ShapeletCoeffs, WeakConfig, WeightDist};
