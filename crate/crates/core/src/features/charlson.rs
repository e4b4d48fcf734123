use std::io::Read;
use std::sync::{Arc, OnceLock};

use chrono::NaiveDate;

use super::{FeatureError, FeatureSchema, FeatureVector};
use crate::dates::sub_months;
use crate::ingest::PersonTimeline;

pub const CHARLSON_SCHEMA_ID: &str = "charlson";
pub const CHARLSON_FEATURE: &str = "charlson_index";
const CHARLSON_LOOKBACK_MONTHS: u32 = 12;

static BUNDLED_WEIGHTS: &str = include_str!("../../data/charlson_weights.csv");

/// A comorbidity group: a weight and the dot-free code prefixes that evidence it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharlsonGroup {
    pub name: String,
    pub weight: u32,
    pub prefixes: Vec<String>,
}

impl CharlsonGroup {
    pub fn matches(&self, code: &str) -> bool {
        self.prefixes.iter().any(|p| code.starts_with(p.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharlsonTable {
    pub groups: Vec<CharlsonGroup>,
}

impl CharlsonTable {
    /// Reads `group,weight,prefixes` rows, prefixes separated by `|`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, FeatureError> {
        let mut rdr = crate::ingest::csv_builder().from_reader(reader);
        if !rdr.headers()?.iter().eq(["group", "weight", "prefixes"]) {
            return Err(FeatureError::MissingHeader);
        }
        let mut groups = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if crate::ingest::is_blank(&rec) {
                continue;
            }
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = || FeatureError::MalformedWeightRow(line);
            if rec.len() != 3 || rec[0].is_empty() {
                return Err(bad());
            }
            let weight: u32 = rec[1].parse().map_err(|_| bad())?;
            let prefixes: Vec<String> = rec[2]
                .split('|')
                .map(|p| p.trim().replace('.', "").to_ascii_uppercase())
                .collect();
            if prefixes.iter().any(String::is_empty) {
                return Err(bad());
            }
            groups.push(CharlsonGroup {
                name: rec[0].to_string(),
                weight,
                prefixes,
            });
        }
        Ok(Self { groups })
    }

    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_WEIGHTS.as_bytes()).expect("bundled Charlson table is well formed")
    }

    /// Sum of weights over groups evidenced by any of `codes`. Each group counts once.
    pub fn score<'a>(&self, codes: impl IntoIterator<Item = &'a str>) -> u32 {
        let mut hit = vec![false; self.groups.len()];
        for code in codes {
            for (i, g) in self.groups.iter().enumerate() {
                if !hit[i] && g.matches(code) {
                    hit[i] = true;
                }
            }
        }
        self.groups.iter().zip(hit).filter(|(_, h)| *h).map(|(g, _)| g.weight).sum()
    }

    pub fn schema() -> Arc<FeatureSchema> {
        static SCHEMA: OnceLock<Arc<FeatureSchema>> = OnceLock::new();
        SCHEMA
            .get_or_init(|| FeatureSchema::new(CHARLSON_SCHEMA_ID, vec![CHARLSON_FEATURE.into()]).unwrap())
            .clone()
    }

    pub fn extract(&self, timeline: &PersonTimeline, prediction_date: NaiveDate) -> FeatureVector {
        let index = charlson_index(timeline, prediction_date, self);
        FeatureVector::new(Self::schema(), vec![index as f64]).expect("finite")
    }
}

/// Charlson score over claims dated in `[prediction_date - 12 months, prediction_date]`.
pub fn charlson_index(timeline: &PersonTimeline, prediction_date: NaiveDate, table: &CharlsonTable) -> u32 {
    let start = sub_months(prediction_date, CHARLSON_LOOKBACK_MONTHS);
    table.score(
        timeline
            .claims_between(start, prediction_date)
            .iter()
            .flat_map(|c| c.diagnoses.iter().map(|d| d.as_str())),
    )
}
