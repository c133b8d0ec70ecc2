//! Curvature regression: Gaussian process, support vector and
//! nearest-neighbour models, with k-fold validation and model selection.

mod cv;
mod dataset;
mod gpr;
mod kernel;
mod knn;
mod model;
mod scaling;
mod svr;

pub use cv::{
    cross_validate, holdout_split, model_select, stratified_folds, RankedModel, SelectionReport,
};
pub use dataset::Dataset;
pub use gpr::{
    neg_log_marginal_likelihood, optimize_hyper, GprHyper, GprModel, HyperSearch, BASE_JITTER,
};
pub use kernel::{Kernel, KernelKind};
pub use knn::KnnModel;
pub use model::{ModelSpec, Prediction, SavedModel, TrainedModel};
pub use scaling::Standardizer;
pub use svr::{SvrModel, SvrParams, SvrScale};
