//! LOS/NLOS classifiers built from scratch: CART-based random forest,
//! gradient-boosted trees with logistic loss, and an RBF-kernel SVM with
//! Platt-calibrated probabilities.

mod forest;
mod gbdt;
mod svm;
mod tree;

pub use forest::{train_rf, RandomForestModel, RfConfig};
pub use gbdt::{train_gbdt, GbdtConfig, GbdtModel};
pub use svm::{kkt_audit, train_svm, KktAudit, SvmConfig, SvmModel};
pub use tree::{DecisionTree, Node};

use crate::features::LabeledSample;
use crate::label::Label;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training data holds a single class ({0})")]
    SingleClass(Label),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature value in row {row}")]
    NonFinite { row: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("SMO did not converge after {iterations} iterations (gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },
}

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self, MlError> {
        if rows.len() != labels.len() {
            return Err(MlError::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(MlError::DimensionMismatch { expected: dim, got: r.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(MlError::NonFinite { row: i });
            }
        }
        Ok(Self { rows, labels, dim })
    }

    pub fn from_samples(samples: &[LabeledSample]) -> Self {
        Self {
            rows: samples.iter().map(|s| s.features.to_array().to_vec()).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
            dim: 3,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// `(los, nlos)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let nlos = self.labels.iter().filter(|l| l.is_nlos()).count();
        (self.labels.len() - nlos, nlos)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
        }
    }

    /// Fails unless both classes are present.
    pub(crate) fn require_two_classes(&self) -> Result<(), MlError> {
        if self.dim == 0 && !self.is_empty() {
            return Err(MlError::DimensionMismatch { expected: 1, got: 0 });
        }
        match self.class_counts() {
            (0, 0) => Err(MlError::EmptyData),
            (_, 0) => Err(MlError::SingleClass(Label::Los)),
            (0, _) => Err(MlError::SingleClass(Label::Nlos)),
            _ => Ok(()),
        }
    }

    /// Per-row weights: 1, or `n / (2 n_class)` when balancing.
    pub(crate) fn class_weights(&self, balanced: bool) -> Vec<f64> {
        let (los, nlos) = self.class_counts();
        let n = self.len() as f64;
        self.labels
            .iter()
            .map(|l| match (balanced, l) {
                (false, _) => 1.0,
                (true, Label::Los) => n / (2.0 * los as f64),
                (true, Label::Nlos) => n / (2.0 * nlos as f64),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProbability {
    pub p_los: f64,
    pub p_nlos: f64,
}

impl ClassProbability {
    pub fn from_nlos(p_nlos: f64) -> Self {
        let p = p_nlos.clamp(0.0, 1.0);
        Self {
            p_los: 1.0 - p,
            p_nlos: p,
        }
    }

    /// Argmax label; an exact tie goes to LOS.
    pub fn label(&self) -> Label {
        if self.p_nlos > self.p_los {
            Label::Nlos
        } else {
            Label::Los
        }
    }

    /// Probability of the argmax label, so always at least 0.5.
    pub fn confidence(&self) -> f64 {
        self.p_los.max(self.p_nlos)
    }
}

pub trait Classifier {
    fn dim(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> ClassProbability;

    fn predict(&self, x: &[f64]) -> Label {
        self.predict_proba(x).label()
    }
}

/// Fraction of rows whose argmax label matches the truth.
pub fn evaluate_accuracy<C: Classifier + ?Sized>(model: &C, data: &Dataset) -> Result<f64, MlError> {
    if data.is_empty() {
        return Err(MlError::EmptyData);
    }
    if data.dim() != model.dim() {
        return Err(MlError::DimensionMismatch {
            expected: model.dim(),
            got: data.dim(),
        });
    }
    let correct = data
        .rows()
        .iter()
        .zip(data.labels())
        .filter(|(x, l)| model.predict(x) == **l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rf,
    Gbdt,
    Svm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Rf, Algorithm::Gbdt, Algorithm::Svm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rf => "rf",
            Algorithm::Gbdt => "gbdt",
            Algorithm::Svm => "svm",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rf" => Ok(Algorithm::Rf),
            "gbdt" => Ok(Algorithm::Gbdt),
            "svm" => Ok(Algorithm::Svm),
            other => Err(format!("unknown algorithm {other:?} (expected rf, gbdt or svm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "lowercase")]
pub enum Model {
    Rf(RandomForestModel),
    Gbdt(GbdtModel),
    Svm(SvmModel),
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Model::Rf(_) => Algorithm::Rf,
            Model::Gbdt(_) => Algorithm::Gbdt,
            Model::Svm(_) => Algorithm::Svm,
        }
    }
}

impl Classifier for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Rf(m) => m.dim(),
            Model::Gbdt(m) => m.dim(),
            Model::Svm(m) => m.dim(),
        }
    }

    fn predict_proba(&self, x: &[f64]) -> ClassProbability {
        match self {
            Model::Rf(m) => m.predict_proba(x),
            Model::Gbdt(m) => m.predict_proba(x),
            Model::Svm(m) => m.predict_proba(x),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MlConfig {
    #[serde(default)]
    pub rf: RfConfig,
    #[serde(default)]
    pub gbdt: GbdtConfig,
    #[serde(default)]
    pub svm: SvmConfig,
}

impl MlConfig {
    /// Same configuration with every model seed replaced by one derived from `seed`.
    pub fn reseeded(mut self, seed: u64) -> Self {
        use crate::rng::{derive_seed, purpose::MODEL_SEED};
        self.rf.seed = derive_seed(seed, MODEL_SEED, 0);
        self.svm.seed = derive_seed(seed, MODEL_SEED, 2);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub rf: RandomForestModel,
    pub gbdt: GbdtModel,
    pub svm: SvmModel,
}

impl TrainedEnsemble {
    pub fn train(data: &Dataset, cfg: &MlConfig) -> Result<Self, MlError> {
        let (rf, (gbdt, svm)) = rayon::join(
            || train_rf(data, &cfg.rf),
            || rayon::join(|| train_gbdt(data, &cfg.gbdt), || train_svm(data, &cfg.svm)),
        );
        Ok(Self {
            rf: rf?,
            gbdt: gbdt?,
            svm: svm?,
        })
    }

    /// Probabilities in `[rf, gbdt, svm]` order.
    pub fn predict_all(&self, x: &[f64]) -> [ClassProbability; 3] {
        [
            self.rf.predict_proba(x),
            self.gbdt.predict_proba(x),
            self.svm.predict_proba(x),
        ]
    }

    pub fn get(&self, algo: Algorithm) -> &dyn Classifier {
        match algo {
            Algorithm::Rf => &self.rf,
            Algorithm::Gbdt => &self.gbdt,
            Algorithm::Svm => &self.svm,
        }
    }
}

pub const MODEL_FORMAT: &str = "zsm-urban-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: Model,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported model file {format:?} version {version}")]
    Version { path: PathBuf, format: String, version: u32 },
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    })
    .expect("model serialization is infallible")
}

pub fn save_model(path: &Path, model: &Model) -> Result<(), ModelIoError> {
    std::fs::write(path, model_to_json(model) + "\n").map_err(|source| ModelIoError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<Model, ModelIoError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelIoError::Io {
        path: path.to_owned(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|source| ModelIoError::Json {
        path: path.to_owned(),
        source,
    })?;
    if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
        return Err(ModelIoError::Version {
            path: path.to_owned(),
            format: file.format,
            version: file.version,
        });
    }
    Ok(file.model)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
