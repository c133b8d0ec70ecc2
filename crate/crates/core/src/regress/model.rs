use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::gpr::{optimize_hyper, GprHyper, GprModel, HyperSearch};
use super::kernel::{Kernel, KernelKind};
use super::knn::KnnModel;
use super::svr::{SvrModel, SvrParams, SvrScale};
use crate::error::{Error, Result};

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

/// A regression model family plus its settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Gpr {
        kernel: KernelKind,
        /// Fixed hyperparameters. When absent they are fitted by maximizing
        /// the marginal likelihood.
        #[serde(default)]
        hyper: Option<GprHyper>,
        #[serde(default = "yes")]
        standardize_targets: bool,
        #[serde(default)]
        search: HyperSearch,
    },
    Svr(SvrParams),
    Knn {
        #[serde(default = "one")]
        k: usize,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

impl ModelSpec {
    pub fn gpr(kernel: KernelKind) -> Self {
        ModelSpec::Gpr {
            kernel,
            hyper: None,
            standardize_targets: true,
            search: HyperSearch::default(),
        }
    }

    /// GPR with fixed hyperparameters and raw targets.
    pub fn gpr_fixed(kernel: Kernel, noise_var: f64) -> Self {
        ModelSpec::Gpr {
            kernel: kernel.kind,
            hyper: Some(GprHyper { kernel, noise_var }),
            standardize_targets: false,
            search: HyperSearch::default(),
        }
    }

    pub fn knn(k: usize) -> Self {
        ModelSpec::Knn {
            k,
            standardize: true,
        }
    }

    /// The seven candidates: four GPR kernels, two SVR presets and 1-NN.
    pub fn default_zoo() -> Vec<ModelSpec> {
        let mut zoo: Vec<ModelSpec> = KernelKind::ALL.iter().map(|k| ModelSpec::gpr(*k)).collect();
        zoo.push(ModelSpec::Svr(SvrParams::preset(SvrScale::Medium)));
        zoo.push(ModelSpec::Svr(SvrParams::preset(SvrScale::Coarse)));
        zoo.push(ModelSpec::knn(1));
        zoo
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Gpr { kernel, .. } => format!("{} GPR", kernel.label()),
            ModelSpec::Svr(p) => match p.scale {
                SvrScale::Medium => "Medium Gaussian SVM".into(),
                SvrScale::Coarse => "Coarse Gaussian SVM".into(),
                SvrScale::Fixed(s) => format!("Gaussian SVM (scale {s})"),
            },
            ModelSpec::Knn { k: 1, .. } => "Nearest NN".into(),
            ModelSpec::Knn { k, .. } => format!("{k}-Nearest NN"),
        }
    }

    pub fn is_gpr(&self) -> bool {
        matches!(self, ModelSpec::Gpr { .. })
    }

    /// Fixes any free hyperparameters by fitting them on `data`.
    pub fn resolve(&self, data: &Dataset) -> Result<ModelSpec> {
        match self {
            ModelSpec::Gpr {
                kernel,
                hyper: None,
                standardize_targets,
                search,
            } => {
                if data.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                let h = optimize_hyper(
                    data.features(),
                    data.targets(),
                    *kernel,
                    *standardize_targets,
                    search,
                )?;
                Ok(ModelSpec::Gpr {
                    kernel: *kernel,
                    hyper: Some(h),
                    standardize_targets: *standardize_targets,
                    search: *search,
                })
            }
            other => Ok(other.clone()),
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<TrainedModel> {
        let (x, y) = (data.features(), data.targets());
        let model = match self.resolve(data)? {
            ModelSpec::Gpr {
                hyper: Some(h),
                standardize_targets,
                ..
            } => TrainedModel::Gpr(GprModel::fit(
                x,
                y,
                h.kernel,
                h.noise_var,
                standardize_targets,
            )?),
            ModelSpec::Gpr { hyper: None, .. } => unreachable!("resolve fixes GPR hyperparameters"),
            ModelSpec::Svr(p) => TrainedModel::Svr(SvrModel::fit(x, y, &p)?),
            ModelSpec::Knn { k, standardize } => {
                TrainedModel::Knn(KnnModel::fit(x, y, k, standardize)?)
            }
        };
        Ok(model)
    }
}

/// A fitted regressor from feature vector to curvature.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Gpr(GprModel),
    Svr(SvrModel),
    Knn(KnnModel),
}

/// Point prediction, with a posterior standard deviation where the model
/// provides one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: Option<f64>,
}

const FORMAT: &str = "sacsim-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    name: String,
    spec: ModelSpec,
    feature_names: Vec<String>,
    model: TrainedModel,
}

/// A trained model together with the spec and feature columns it was fitted
/// with.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub model: TrainedModel,
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        match self {
            TrainedModel::Gpr(m) => m.dim(),
            TrainedModel::Svr(m) => m.dim(),
            TrainedModel::Knn(m) => m.dim(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(match self {
            TrainedModel::Gpr(m) => {
                let (mean, var) = m.predict(x)?;
                Prediction {
                    mean,
                    std: Some(var.sqrt()),
                }
            }
            TrainedModel::Svr(m) => Prediction {
                mean: m.predict(x)?,
                std: None,
            },
            TrainedModel::Knn(m) => Prediction {
                mean: m.predict(x)?,
                std: None,
            },
        })
    }
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: FORMAT.into(),
            version: VERSION,
            name: self.spec.name(),
            spec: self.spec.clone(),
            feature_names: self.feature_names.clone(),
            model: self.model.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if file.format != FORMAT {
            return Err(Error::Model(format!("unknown format `{}`", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Model(format!(
                "unsupported version {}",
                file.version
            )));
        }
        if file.feature_names.len() != file.model.dim() {
            return Err(Error::Model(format!(
                "{} feature names for a {}-dimensional model",
                file.feature_names.len(),
                file.model.dim()
            )));
        }
        Ok(SavedModel {
            spec: file.spec,
            feature_names: file.feature_names,
            model: file.model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
