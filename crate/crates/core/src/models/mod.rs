//! Risk models: L2-regularized logistic regression with percentile
//! calibration, and second-order gradient-boosted trees.

mod boost;
mod io;
mod logistic;
mod percentile;

use std::sync::Arc;

use thiserror::Error;

use crate::features::{FeatureMatrix, FeatureSchema, FeatureVector};

pub use boost::{train_boosted_trees, training_log_loss, Tree, TreeEnsembleModel, TreeNode};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use logistic::{fit_logistic, logistic_objective, sigmoid, LogisticConfig, LogisticModel};
pub use percentile::PercentileMap;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("training data is degenerate: {0}")]
    DegenerateData(String),
    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),
    #[error("unknown model version {0}")]
    UnknownModelVersion(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("percentile map needs at least one score")]
    EmptyDistribution,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hyperparameters for [`train_boosted_trees`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub gamma_min_gain: f64,
    pub min_child_hessian: f64,
    /// Recorded for reproducibility; training itself draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            l2_lambda: 1.0,
            gamma_min_gain: 0.0,
            min_child_hessian: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ModelError::InvalidConfig("learning_rate must be in (0, 1]".into()));
        }
        if self.max_depth < 1 {
            return Err(ModelError::InvalidConfig("max_depth must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.gamma_min_gain >= 0.0 && self.min_child_hessian >= 0.0) {
            return Err(ModelError::InvalidConfig("regularization terms must be non-negative".into()));
        }
        Ok(())
    }
}

/// Labeled rows in row-major order, sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Arc<FeatureSchema>,
    values: Vec<f64>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(schema: Arc<FeatureSchema>) -> Self {
        Self {
            schema,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn from_matrix(matrix: &FeatureMatrix) -> Self {
        let mut d = Self::new(Arc::clone(&matrix.schema));
        d.values.reserve(matrix.len() * matrix.schema.len());
        for row in &matrix.rows {
            d.values.extend_from_slice(&row.values);
            d.labels.push(row.label);
        }
        d
    }

    pub fn push(&mut self, vector: &FeatureVector, label: bool) -> Result<(), ModelError> {
        if vector.names() != self.schema.names.as_slice() {
            return Err(ModelError::SchemaMismatch(format!(
                "row schema {:?} differs from dataset schema {:?}",
                vector.schema_id(),
                self.schema.id
            )));
        }
        self.values.extend_from_slice(vector.values());
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        let p = self.n_features();
        (0..self.len()).map(move |i| &self.values[i * p..(i + 1) * p])
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub(crate) fn require_two_classes(&self) -> Result<(), ModelError> {
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(ModelError::DegenerateData(format!(
                "{} rows with {} positives; both classes are required",
                self.len(),
                pos
            )));
        }
        Ok(())
    }
}

/// A serializable model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskModel {
    Logistic(LogisticModel),
    Ensemble(TreeEnsembleModel),
}

impl RiskModel {
    pub fn kind(&self) -> &'static str {
        match self {
            RiskModel::Logistic(_) => "logistic",
            RiskModel::Ensemble(_) => "ensemble",
        }
    }

    pub fn features(&self) -> &[String] {
        match self {
            RiskModel::Logistic(m) => &m.features,
            RiskModel::Ensemble(m) => &m.features,
        }
    }

    pub fn score(&self, vector: &FeatureVector) -> Result<f64, ModelError> {
        match self {
            RiskModel::Logistic(m) => m.score(vector),
            RiskModel::Ensemble(m) => m.score(vector),
        }
    }

    /// Probabilities for every row of a dataset, resolving columns once.
    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<f64>, ModelError> {
        match self {
            RiskModel::Logistic(m) => m.score_dataset(data),
            RiskModel::Ensemble(m) => m.score_dataset(data),
        }
    }
}

impl From<LogisticModel> for RiskModel {
    fn from(m: LogisticModel) -> Self {
        RiskModel::Logistic(m)
    }
}

impl From<TreeEnsembleModel> for RiskModel {
    fn from(m: TreeEnsembleModel) -> Self {
        RiskModel::Ensemble(m)
    }
}
