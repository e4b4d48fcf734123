//! Claims-based respiratory vulnerability index.
//!
//! The pipeline runs from raw claims files to evaluated risk models:
//!
//! - [`codes`]: ICD-10-CM normalization and the CCSR category catalog
//! - [`ingest`]: claims / eligibility / demographics CSV parsing and per-person timelines
//! - [`cohort`]: proxy-outcome labeling, cohort recipes, person-level splits, resampling
//! - [`features`]: survey, CCSR-indicator and Charlson feature extraction
//! - [`models`]: logistic regression, gradient-boosted trees, percentile calibration, model JSON
//! - [`eval`]: ROC AUC, sensitivity at alert rate, lift tables
//! - [`synth`]: deterministic synthetic populations with planted risk

pub mod cohort;
pub mod codes;
pub mod dates;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod synth;

pub use codes::{CcsrCatalog, CcsrCategory, DiagnosisCode, ProxyCodeSet};
pub use cohort::{CohortReport, PredictionInstance, SourceCohort};
pub use dates::YearMonth;
pub use eval::EvaluationReport;
pub use features::{FeatureSchema, FeatureVector, SurveyAnswers, SurveyCondition};
pub use ingest::{ClaimRecord, ClaimType, Demographics, Gender, PersonTimeline};
pub use models::{LogisticModel, RiskModel, TrainConfig, TreeEnsembleModel};
