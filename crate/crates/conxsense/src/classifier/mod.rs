//! From-scratch binary classifiers over the eight context features: k-nearest
//! neighbors, Gaussian naive Bayes, and a random forest. All three expose a
//! positive-class score in [0,1] driving confidences and ROC evaluation.
//!
//! The positive class is always the task's "relax" label. Ties of any kind
//! resolve toward the restrictive class. Training is deterministic given the
//! spec seed and the dataset (input order is normalized away).

mod eval;
mod forest;
mod knn;
mod naive_bayes;

pub use eval::{
    cross_validate, operating_point, roc_curve, threshold_for_max_fpr, vertical_average,
    Confusion, EvalResult, FoldEval, OperatingPoint, RocPoint,
};
pub use forest::ForestModel;
pub use knn::KnnModel;
pub use naive_bayes::NaiveBayesModel;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, Label, LabeledFeatureVector, Task, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    NaiveBayes,
    RandomForest,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "naive_bayes" | "nb" => Ok(ModelKind::NaiveBayes),
            "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            other => Err(format!("unknown model kind {other:?}")),
        }
    }
}

/// Fraction of features examined per split: `"sqrt"` or a number in (0,1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureFrac {
    Sqrt,
    Frac(f64),
}

impl FeatureFrac {
    /// Number of candidate features per split (at least 1).
    pub fn count(self, n_features: usize) -> usize {
        let raw = match self {
            FeatureFrac::Sqrt => (n_features as f64).sqrt().ceil(),
            FeatureFrac::Frac(f) => (f * n_features as f64).ceil(),
        };
        (raw as usize).clamp(1, n_features)
    }
}

impl Serialize for FeatureFrac {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            FeatureFrac::Sqrt => serializer.serialize_str("sqrt"),
            FeatureFrac::Frac(f) => serializer.serialize_f64(*f),
        }
    }
}

impl<'de> Deserialize<'de> for FeatureFrac {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) if s == "sqrt" => Ok(FeatureFrac::Sqrt),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected \"sqrt\" or a fraction, got {s:?}"
            ))),
            Raw::Number(f) if f > 0.0 && f <= 1.0 => Ok(FeatureFrac::Frac(f)),
            Raw::Number(f) => Err(serde::de::Error::custom(format!(
                "feature fraction {f} outside (0, 1]"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub knn_k: usize,
    pub rf_trees: usize,
    pub rf_feature_frac: FeatureFrac,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::RandomForest,
            knn_k: 5,
            rf_trees: 100,
            rf_feature_frac: FeatureFrac::Sqrt,
            seed: 42,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("class {label:?} has {got} examples, needs {needed}")]
    InsufficientData {
        label: Option<Label>,
        needed: usize,
        got: usize,
    },
    #[error("cross-validation needs at least 2 examples per class")]
    TooFewExamples,
    #[error("scores contain only one class")]
    OneClassOnly,
    #[error("dataset mixes tasks or is empty")]
    InvalidDataset,
    #[error("knn_k must be >= 1 and rf_trees >= 1")]
    InvalidSpec,
}

/// Version tag written into model files.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Knn(KnnModel),
    NaiveBayes(NaiveBayesModel),
    RandomForest(ForestModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema_version: u32,
    pub task: Task,
    /// The relax class; scores and ROC positives refer to it.
    pub positive: Label,
    pub negative: Label,
    pub params: ModelParams,
}

impl TrainedModel {
    /// Estimated probability that `fv` belongs to the positive (relax) class.
    pub fn score_positive(&self, fv: &FeatureVector) -> f64 {
        match &self.params {
            ModelParams::Knn(m) => m.score_positive(&fv.f),
            ModelParams::NaiveBayes(m) => m.score_positive(&fv.f),
            ModelParams::RandomForest(m) => m.score_positive(&fv.f),
        }
    }

    /// Predicted label plus the confidence of that prediction. A score of
    /// exactly one half resolves to the restrictive class.
    pub fn predict(&self, fv: &FeatureVector) -> (Label, f64) {
        let score = self.score_positive(fv);
        if score > 0.5 {
            (self.positive, score)
        } else {
            (self.negative, 1.0 - score)
        }
    }

    pub fn kind(&self) -> ModelKind {
        match &self.params {
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::NaiveBayes(_) => ModelKind::NaiveBayes,
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
        }
    }
}

/// Per-feature z-score standardization fitted on training data only.
/// Constant features keep a unit scale so they standardize to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl Standardizer {
    pub fn fit(rows: &[[f64; FEATURE_COUNT]]) -> Standardizer {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for row in rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0; FEATURE_COUNT];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let mut std = [0.0; FEATURE_COUNT];
        for (s, v) in std.iter_mut().zip(&var) {
            let sd = (v / n).sqrt();
            *s = if sd > 0.0 { sd } else { 1.0 };
        }
        Standardizer { mean, std }
    }

    pub fn apply(&self, row: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            out[i] = (row[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}

/// Sorts a dataset into its canonical training order: by timestamp, then
/// label, then feature values. Training is insensitive to input order.
pub(crate) fn normalize_order(data: &[LabeledFeatureVector]) -> Vec<LabeledFeatureVector> {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| {
        (a.fv.t, a.label, a.fv.f.map(f64::to_bits))
            .cmp(&(b.fv.t, b.label, b.fv.f.map(f64::to_bits)))
    });
    sorted
}

fn class_counts(data: &[LabeledFeatureVector], positive: Label) -> (usize, usize) {
    let pos = data.iter().filter(|d| d.label == positive).count();
    (pos, data.len() - pos)
}

/// Trains a model of the requested kind. The task and the positive class are
/// taken from the data; every example must belong to one task.
pub fn train(
    spec: &ModelSpec,
    data: &[LabeledFeatureVector],
) -> Result<TrainedModel, ClassifierError> {
    if spec.knn_k < 1 || spec.rf_trees < 1 {
        return Err(ClassifierError::InvalidSpec);
    }
    let Some(first) = data.first() else {
        return Err(ClassifierError::InvalidDataset);
    };
    let task = first.task;
    if data.iter().any(|d| d.task != task) {
        return Err(ClassifierError::InvalidDataset);
    }
    let positive = task.relax_label();
    let negative = task.restrict_label();
    let data = normalize_order(data);

    let (pos, neg) = class_counts(&data, positive);
    let per_class_needed = match spec.kind {
        ModelKind::Knn => 1,
        ModelKind::NaiveBayes | ModelKind::RandomForest => 2,
    };
    for (label, got) in [(positive, pos), (negative, neg)] {
        if got < per_class_needed {
            return Err(ClassifierError::InsufficientData {
                label: Some(label),
                needed: per_class_needed,
                got,
            });
        }
    }
    if spec.kind == ModelKind::Knn && data.len() < spec.knn_k {
        return Err(ClassifierError::InsufficientData {
            label: None,
            needed: spec.knn_k,
            got: data.len(),
        });
    }

    let rows: Vec<[f64; FEATURE_COUNT]> = data.iter().map(|d| d.fv.f).collect();
    let is_positive: Vec<bool> = data.iter().map(|d| d.label == positive).collect();

    let params = match spec.kind {
        ModelKind::Knn => ModelParams::Knn(KnnModel::fit(&rows, &is_positive, spec.knn_k)),
        ModelKind::NaiveBayes => {
            ModelParams::NaiveBayes(NaiveBayesModel::fit(&rows, &is_positive))
        }
        ModelKind::RandomForest => ModelParams::RandomForest(ForestModel::fit(
            &rows,
            &is_positive,
            spec.rf_trees,
            spec.rf_feature_frac.count(FEATURE_COUNT),
            spec.seed,
        )),
    };

    Ok(TrainedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        task,
        positive,
        negative,
        params,
    })
}
