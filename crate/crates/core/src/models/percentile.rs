use super::ModelError;

/// Sorted training scores; a score's percentile is the share of training
/// scores at or below it.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileMap {
    sorted: Vec<f64>,
}

impl PercentileMap {
    pub fn fit(mut scores: Vec<f64>) -> Result<Self, ModelError> {
        if scores.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(ModelError::CorruptModel("percentile scores must be finite".into()));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { sorted: scores })
    }

    /// Rebuilds a map from already-sorted scores, as stored in a model file.
    pub fn from_sorted(sorted: Vec<f64>) -> Result<Self, ModelError> {
        if sorted.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        if sorted.iter().any(|s| !s.is_finite()) || sorted.windows(2).any(|w| w[0] > w[1]) {
            return Err(ModelError::CorruptModel("percentiles must be finite and sorted".into()));
        }
        Ok(Self { sorted })
    }

    pub fn scores(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn percentile_of(&self, score: f64) -> f64 {
        let at_or_below = self.sorted.partition_point(|&s| s <= score);
        100.0 * at_or_below as f64 / self.sorted.len() as f64
    }
}
