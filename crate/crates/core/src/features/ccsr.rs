use std::collections::HashMap;
use std::sync::Arc;

use chrono::{Days, NaiveDate};

use super::{FeatureSchema, FeatureVector};
use crate::codes::{CcsrCatalog, DiagnosisCode};
use crate::dates::{age_in_years, sub_months};
use crate::ingest::{Gender, PersonTimeline};

pub const CCSR_SCHEMA_ID: &str = "ccsr";
/// Claims in the three months before the prediction date are ignored.
pub const CCSR_LAG_MONTHS: u32 = 3;
pub const CCSR_LOOKBACK_MONTHS: u32 = 15;

/// Age, sex and one indicator per catalog category, in sorted category order.
#[derive(Debug, Clone)]
pub struct CcsrFeaturizer {
    schema: Arc<FeatureSchema>,
    // code -> feature columns it sets
    columns: HashMap<DiagnosisCode, Vec<usize>>,
}

impl CcsrFeaturizer {
    pub fn new(catalog: &CcsrCatalog) -> Self {
        let categories: Vec<_> = catalog.categories().into_iter().collect();
        let mut names = vec!["age".to_string(), "gender_male".to_string()];
        names.extend(categories.iter().map(|c| c.id().to_string()));
        let schema = FeatureSchema::new(CCSR_SCHEMA_ID, names).expect("category ids are unique");

        let columns = catalog
            .codes()
            .map(|(code, cats)| {
                let cols = cats
                    .iter()
                    .map(|c| 2 + categories.binary_search(&c).expect("category listed in catalog"))
                    .collect();
                (code.clone(), cols)
            })
            .collect();
        Self { schema, columns }
    }

    pub fn schema(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    /// Uses claims dated in `[prediction_date - 15 months, prediction_date - 3 months)`.
    pub fn extract(&self, timeline: &PersonTimeline, prediction_date: NaiveDate) -> FeatureVector {
        let start = sub_months(prediction_date, CCSR_LOOKBACK_MONTHS);
        let end = sub_months(prediction_date, CCSR_LAG_MONTHS);
        let mut values = vec![0.0; self.schema.len()];
        values[0] = age_in_years(timeline.demographics.birth_date, prediction_date) as f64;
        values[1] = (timeline.demographics.gender == Gender::Male) as u8 as f64;
        if let Some(last) = end.checked_sub_days(Days::new(1)) {
            for claim in timeline.claims_between(start, last) {
                for dx in &claim.diagnoses {
                    for &col in self.columns.get(dx).map(Vec::as_slice).unwrap_or(&[]) {
                        values[col] = 1.0;
                    }
                }
            }
        }
        FeatureVector::new(Arc::clone(&self.schema), values).expect("indicator features are finite")
    }
}

pub fn extract_ccsr_indicators(
    timeline: &PersonTimeline,
    prediction_date: NaiveDate,
    catalog: &CcsrCatalog,
) -> FeatureVector {
    CcsrFeaturizer::new(catalog).extract(timeline, prediction_date)
}
