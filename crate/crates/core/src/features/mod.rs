//! Feature extraction: the survey feature set, CCSR category indicators and
//! the Charlson comorbidity baseline, plus the feature-matrix CSV format.

mod ccsr;
mod charlson;
mod survey;

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::Arc;

use chrono::NaiveDate;
use thiserror::Error;

use crate::cohort::PredictionInstance;
use crate::dates::parse_date;

pub use ccsr::{extract_ccsr_indicators, CcsrFeaturizer, CCSR_SCHEMA_ID, CCSR_LAG_MONTHS, CCSR_LOOKBACK_MONTHS};
pub use charlson::{charlson_index, CharlsonGroup, CharlsonTable, CHARLSON_FEATURE, CHARLSON_SCHEMA_ID};
pub use survey::{
    answers_to_features, extract_survey_features, survey_schema, FieldError, GroupMember, SurveyAnswers,
    SurveyCondition, SurveyFeatureGroups, SurveyFeaturizer, SURVEY_LOOKBACK_MONTHS, SURVEY_SCHEMA_ID,
};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("duplicate feature name {0:?}")]
    DuplicateName(String),
    #[error("feature {name:?} is not finite ({value})")]
    NonFinite { name: String, value: f64 },
    #[error("missing or malformed header in feature file")]
    MissingHeader,
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
    #[error("malformed Charlson table at line {0}")]
    MalformedWeightRow(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ordered, unique feature names identified by a schema id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    pub id: String,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn new(id: impl Into<String>, names: Vec<String>) -> Result<Arc<Self>, FeatureError> {
        let mut seen = HashSet::with_capacity(names.len());
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(FeatureError::DuplicateName(n.clone()));
            }
        }
        Ok(Arc::new(Self { id: id.into(), names }))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Named real-valued features sharing a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    schema: Arc<FeatureSchema>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Arc<FeatureSchema>, values: Vec<f64>) -> Result<Self, FeatureError> {
        assert_eq!(schema.len(), values.len(), "value count must match schema");
        if let Some((name, &value)) = schema.names.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                name: name.clone(),
                value,
            });
        }
        Ok(Self { schema, values })
    }

    /// Builds a vector from `(name, value)` pairs in the given order.
    pub fn from_pairs<S: Into<String>>(
        schema_id: &str,
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, FeatureError> {
        let (names, values): (Vec<String>, Vec<f64>) = pairs.into_iter().map(|(n, v)| (n.into(), v)).unzip();
        Self::new(FeatureSchema::new(schema_id, names)?, values)
    }

    pub fn schema(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn schema_id(&self) -> &str {
        &self.schema.id
    }

    pub fn names(&self) -> &[String] {
        &self.schema.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.schema.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

/// One row of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub person_id: String,
    pub prediction_date: NaiveDate,
    pub label: bool,
    pub values: Vec<f64>,
}

/// A feature file in memory: a schema plus one row per prediction instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: Arc<FeatureSchema>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn new(schema: Arc<FeatureSchema>) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn push(&mut self, instance: &PredictionInstance, vector: &FeatureVector) {
        assert_eq!(vector.names(), self.schema.names.as_slice(), "vector schema differs from matrix");
        self.rows.push(FeatureRow {
            person_id: instance.person_id.clone(),
            prediction_date: instance.prediction_date,
            label: instance.label,
            values: vector.values.clone(),
        });
    }

    pub fn vector(&self, row: usize) -> FeatureVector {
        FeatureVector {
            schema: Arc::clone(&self.schema),
            values: self.rows[row].values.clone(),
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Header is `person_id,prediction_date,label` followed by the feature names.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        let header = ["person_id", "prediction_date", "label"]
            .into_iter()
            .chain(self.schema.names.iter().map(String::as_str));
        w.write_record(header)?;
        let mut record = Vec::with_capacity(self.schema.len() + 3);
        for row in &self.rows {
            record.clear();
            record.push(row.person_id.clone());
            record.push(row.prediction_date.to_string());
            record.push(if row.label { "1" } else { "0" }.to_string());
            record.extend(row.values.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, schema_id: &str) -> Result<Self, FeatureError> {
        let mut rdr = crate::ingest::csv_builder().from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || !header.iter().take(3).eq(["person_id", "prediction_date", "label"]) {
            return Err(FeatureError::MissingHeader);
        }
        let names = header.iter().skip(3).map(String::from).collect();
        let schema = FeatureSchema::new(schema_id, names)?;
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if crate::ingest::is_blank(&rec) {
                continue;
            }
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| FeatureError::BadRow { line, message };
            if rec.len() != header.len() {
                return Err(bad(format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            let prediction_date = parse_date(&rec[1]).ok_or_else(|| bad(format!("bad date {:?}", &rec[1])))?;
            let label = match &rec[2] {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("bad label {other:?}"))),
            };
            let values = rec
                .iter()
                .skip(3)
                .map(|v| match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(bad(format!("bad feature value {v:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(FeatureRow {
                person_id: rec[0].to_string(),
                prediction_date,
                label,
                values,
            });
        }
        Ok(Self { schema, rows })
    }
}
