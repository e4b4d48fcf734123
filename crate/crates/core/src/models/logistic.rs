use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dataset, ModelError, PercentileMap};
use crate::features::{survey_schema, FeatureVector};

static FROZEN_SURVEY_MODEL: &str = include_str!("../../data/survey_model.json");
static SURVEY_COEFFICIENTS: &str = include_str!("../../data/survey_coefficients.csv");

/// `1 / (1 + e^-z)` without overflow for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`, stable in both tails.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub features: Vec<String>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub percentiles: Option<PercentileMap>,
}

impl LogisticModel {
    pub fn new(features: Vec<String>, coefficients: Vec<f64>, intercept: f64) -> Result<Self, ModelError> {
        if features.len() != coefficients.len() {
            return Err(ModelError::CorruptModel(format!(
                "{} features but {} coefficients",
                features.len(),
                coefficients.len()
            )));
        }
        if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::CorruptModel("coefficients must be finite".into()));
        }
        Ok(Self {
            features,
            coefficients,
            intercept,
            percentiles: None,
        })
    }

    pub fn with_percentiles(mut self, map: PercentileMap) -> Self {
        self.percentiles = Some(map);
        self
    }

    /// The shipped survey model: published coefficients plus a percentile map.
    pub fn frozen_survey() -> Self {
        match super::io::load_model(FROZEN_SURVEY_MODEL.as_bytes()) {
            Ok(super::RiskModel::Logistic(m)) => m,
            other => panic!("bundled survey model is not a logistic model: {other:?}"),
        }
    }

    /// The survey model built straight from the checked-in coefficient table,
    /// without a percentile map.
    pub fn survey_from_coefficients() -> Self {
        let mut intercept = None;
        let mut coef = std::collections::HashMap::new();
        for line in SURVEY_COEFFICIENTS.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let (name, value) = line.split_once(',').expect("feature,coefficient row");
            let value: f64 = value.trim().parse().expect("numeric coefficient");
            if name == "intercept" {
                intercept = Some(value);
            } else {
                coef.insert(name.to_string(), value);
            }
        }
        let schema = survey_schema();
        let coefficients = schema
            .names
            .iter()
            .map(|n| *coef.get(n).unwrap_or_else(|| panic!("no coefficient for {n}")))
            .collect();
        Self::new(schema.names.clone(), coefficients, intercept.expect("intercept row")).expect("valid survey model")
    }

    fn check_names(&self, names: &[String]) -> Result<(), ModelError> {
        if names != self.features.as_slice() {
            return Err(ModelError::SchemaMismatch(format!(
                "model expects {} features {:?}..., got {} features",
                self.features.len(),
                self.features.first(),
                names.len()
            )));
        }
        Ok(())
    }

    pub fn linear(&self, values: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(values).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn score(&self, vector: &FeatureVector) -> Result<f64, ModelError> {
        self.check_names(vector.names())?;
        Ok(sigmoid(self.linear(vector.values())))
    }

    pub fn score_dataset(&self, data: &Dataset) -> Result<Vec<f64>, ModelError> {
        self.check_names(&data.schema.names)?;
        Ok(data.rows().map(|r| sigmoid(self.linear(r))).collect())
    }

    pub fn percentile_of(&self, probability: f64) -> Option<f64> {
        self.percentiles.as_ref().map(|m| m.percentile_of(probability))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    /// Penalty on coefficients (not the intercept), on the summed log-likelihood scale.
    pub l2_lambda: f64,
    /// Euclidean norm of the objective gradient at which fitting stops.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1.0,
            tolerance: 1e-6,
            max_iters: 100,
        }
    }
}

/// Penalized negative log-likelihood and its gradient.
///
/// `beta[0]` is the intercept; `beta[1..]` pair with the dataset columns.
pub fn logistic_objective(data: &Dataset, beta: &[f64], l2_lambda: f64) -> (f64, Vec<f64>) {
    let p = data.n_features();
    assert_eq!(beta.len(), p + 1);
    let mut loss = 0.0;
    let mut grad = vec![0.0; p + 1];
    for (row, &y) in data.rows().zip(data.labels()) {
        let z = beta[0] + beta[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>();
        let y = y as u8 as f64;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        grad[0] += r;
        for (g, x) in grad[1..].iter_mut().zip(row) {
            *g += r * x;
        }
    }
    for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
        loss += 0.5 * l2_lambda * b * b;
        *g += l2_lambda * b;
    }
    (loss, grad)
}

fn hessian(data: &Dataset, beta: &[f64], l2_lambda: f64) -> DMatrix<f64> {
    let d = data.n_features() + 1;
    let mut h = vec![0.0; d * d];
    let mut x = vec![1.0; d];
    for row in data.rows() {
        x[1..].copy_from_slice(row);
        let z: f64 = beta.iter().zip(&x).map(|(b, v)| b * v).sum();
        let s = sigmoid(z);
        let w = s * (1.0 - s);
        if w == 0.0 {
            continue;
        }
        for j in 0..d {
            let wx = w * x[j];
            if wx == 0.0 {
                continue;
            }
            let hj = &mut h[j * d..(j + 1) * d];
            for k in j..d {
                hj[k] += wx * x[k];
            }
        }
    }
    for j in 1..d {
        h[j * d + j] += l2_lambda;
    }
    DMatrix::from_fn(d, d, |r, c| if r <= c { h[r * d + c] } else { h[c * d + r] })
}

/// Damped Newton iterations on the L2-penalized log-likelihood.
pub fn fit_logistic(data: &Dataset, config: &LogisticConfig) -> Result<LogisticModel, ModelError> {
    data.require_two_classes()?;
    let p = data.n_features();
    let prevalence = data.positives() as f64 / data.len() as f64;
    let mut beta = vec![0.0; p + 1];
    beta[0] = (prevalence / (1.0 - prevalence)).ln();

    let (mut loss, mut grad) = logistic_objective(data, &beta, config.l2_lambda);
    for _ in 0..config.max_iters {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < config.tolerance {
            return LogisticModel::new(data.schema.names.clone(), beta[1..].to_vec(), beta[0]);
        }
        let h = hessian(data, &beta, config.l2_lambda);
        let g = DVector::from_column_slice(&grad);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => h.lu().solve(&g).ok_or_else(|| ModelError::DegenerateData("singular Hessian".into()))?,
        };
        let descent: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();

        // backtracking; accept ties within rounding once the loss stops moving
        let slack = 1e-12 * loss.abs().max(1.0);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b - t * s).collect();
            let (trial_loss, trial_grad) = logistic_objective(data, &trial, config.l2_lambda);
            if trial_loss <= loss - 1e-4 * t * descent + slack || t < 1e-10 {
                beta = trial;
                loss = trial_loss;
                grad = trial_grad;
                break;
            }
            t *= 0.5;
        }
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm < config.tolerance {
        return LogisticModel::new(data.schema.names.clone(), beta[1..].to_vec(), beta[0]);
    }
    Err(ModelError::NonConvergence(config.max_iters))
}
