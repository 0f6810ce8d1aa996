//! Affective-state classifier: z-score normalization, a 14 → 64 → |labels|
//! perceptron trained with Adam, stratified splitting and a binary model file.

mod metrics;
mod mlp;
mod model_file;
mod norm;
mod split;
mod train;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::{LabeledFeatures, FEATURE_DIM};
use crate::signal::StateLabel;

pub use metrics::ConfusionMatrix;
pub use mlp::{softmax, Dropout, Mlp};
pub use model_file::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use norm::{fit_norm, NormStats};
pub use split::{stratified_folds, stratified_split};
pub use train::{cross_validate, evaluate, train, FoldResult, TrainedModel};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("training set needs at least two rows")]
    EmptyTrainingSet,
    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("expected {expected} inputs, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    CorruptWeights(String),
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("label {0:?} is not in the configured label set")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub label_set: Vec<StateLabel>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_dim: FEATURE_DIM,
            hidden_units: 64,
            dropout_p: 0.3,
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 100,
            label_set: StateLabel::default_set(),
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn with_seed(seed: u64) -> ClassifierConfig {
        ClassifierConfig { seed, ..ClassifierConfig::default() }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must be in [0, 1)");
        }
        if self.label_set.len() < 2 {
            return bad("label set needs at least two labels");
        }
        let mut seen = self.label_set.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.label_set.len() {
            return bad("label set has duplicates");
        }
        if self.input_dim == 0 || self.hidden_units == 0 {
            return bad("layer sizes must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn label_index(&self, label: &StateLabel) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }
}

/// Rows of raw features with labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<StateLabel>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<StateLabel>) -> Dataset {
        assert_eq!(features.len(), labels.len(), "one label per row");
        Dataset { features, labels }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self) -> BTreeMap<StateLabel, usize> {
        let mut counts = BTreeMap::new();
        for l in &self.labels {
            *counts.entry(l.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Label positions within `label_set`.
    pub fn label_indices(&self, label_set: &[StateLabel]) -> Result<Vec<usize>, ClassifierError> {
        self.labels
            .iter()
            .map(|l| {
                label_set.iter().position(|s| s == l).ok_or_else(|| ClassifierError::UnknownLabel(l.to_string()))
            })
            .collect()
    }
}

impl From<&LabeledFeatures> for Dataset {
    fn from(data: &LabeledFeatures) -> Dataset {
        Dataset {
            features: data.vectors.iter().map(|v| v.values.to_vec()).collect(),
            labels: data.labels.clone(),
        }
    }
}

/// Trained network together with its normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub norm: NormStats,
    pub format_version: u32,
    net: Mlp,
}

impl ClassifierModel {
    pub fn new(config: ClassifierConfig, norm: NormStats, net: Mlp) -> Result<ClassifierModel, ClassifierError> {
        config.validate()?;
        let shape_ok = net.input_dim() == config.input_dim
            && net.hidden_dim() == config.hidden_units
            && net.output_dim() == config.label_set.len()
            && norm.dim() == config.input_dim
            && norm.std.len() == config.input_dim;
        if !shape_ok {
            return Err(ClassifierError::InvalidConfig("network shape does not match config".into()));
        }
        if !net.params().iter().chain(&norm.mean).chain(&norm.std).all(|v| v.is_finite()) {
            return Err(ClassifierError::CorruptWeights("non-finite parameter".into()));
        }
        Ok(ClassifierModel { config, norm, format_version: MODEL_FORMAT_VERSION, net })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn labels(&self) -> &[StateLabel] {
        &self.config.label_set
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ClassifierError> {
        if x.len() != self.config.input_dim {
            return Err(ClassifierError::ShapeMismatch { expected: self.config.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// Probabilities for an already normalized input. Passing an rng turns on
    /// training-mode dropout.
    pub fn forward<R: Rng>(&self, x: &[f64], train_rng: Option<&mut R>) -> Result<Vec<f64>, ClassifierError> {
        self.check_dim(x)?;
        let mut dropout = train_rng.map(|rng| Dropout { p: self.config.dropout_p, rng });
        Ok(self.net.forward(x, dropout.as_mut()))
    }

    /// Normalizes a raw feature row and returns label probabilities.
    pub fn predict_proba(&self, raw: &[f64]) -> Result<Vec<f64>, ClassifierError> {
        self.check_dim(raw)?;
        Ok(self.net.forward::<rand_chacha::ChaCha8Rng>(&self.norm.normalize(raw), None))
    }

    pub fn predict_index(&self, raw: &[f64]) -> Result<usize, ClassifierError> {
        let p = self.predict_proba(raw)?;
        Ok(argmax(&p))
    }

    pub fn predict(&self, raw: &[f64]) -> Result<&StateLabel, ClassifierError> {
        Ok(&self.config.label_set[self.predict_index(raw)?])
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
