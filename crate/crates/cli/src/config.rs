use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use c19_core::cohort::{FixedDateRules, MonthlyRules, SamplingParams};
use c19_core::models::{LogisticConfig, TrainConfig};
use c19_core::synth::SynthConfig;
use c19_core::{ProxyCodeSet, YearMonth};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 2016;
pub const DEFAULT_BAD_ROW_THRESHOLD: f64 = 0.01;

fn default_prediction_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 9, 30).expect("valid date")
}

/// Everything a pipeline run needs. Read from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub catalog: Option<PathBuf>,
    pub claims: Option<PathBuf>,
    pub eligibility: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub charlson_weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Prediction date of the fixed-date cohort.
    pub prediction_date: NaiveDate,
    /// Month-ends used by the monthly cohort; both default to the month of `prediction_date`.
    pub monthly_start: Option<YearMonth>,
    pub monthly_end: Option<YearMonth>,
    pub fixed_rules: FixedDateRules,
    pub monthly_rules: MonthlyRules,
    pub proxy: ProxyCodeSet,
    pub test_fraction: f64,
    /// `None` keeps the training union as is.
    pub sampling: Option<SamplingParams>,
    /// Largest tolerated share of rejected rows per input file.
    pub bad_row_threshold: f64,
    pub boosting: TrainConfig,
    pub logistic: LogisticConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            catalog: None,
            claims: None,
            eligibility: None,
            demographics: None,
            model: None,
            charlson_weights: None,
            out: None,
            seed: DEFAULT_SEED,
            prediction_date: default_prediction_date(),
            monthly_start: None,
            monthly_end: None,
            fixed_rules: FixedDateRules::default(),
            monthly_rules: MonthlyRules::default(),
            proxy: ProxyCodeSet::default(),
            test_fraction: 0.2,
            sampling: Some(SamplingParams::default()),
            bad_row_threshold: DEFAULT_BAD_ROW_THRESHOLD,
            boosting: TrainConfig::default(),
            logistic: LogisticConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if !(0.0..=1.0).contains(&self.bad_row_threshold) {
            return bad(format!("bad row threshold must lie in [0, 1], got {}", self.bad_row_threshold));
        }
        let (start, end) = self.monthly_range();
        if start > end {
            return bad(format!("monthly_start {start} is after monthly_end {end}"));
        }
        self.boosting.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn monthly_range(&self) -> (YearMonth, YearMonth) {
        let pd = YearMonth::of(self.prediction_date);
        (self.monthly_start.unwrap_or(pd), self.monthly_end.unwrap_or(pd))
    }

    /// Path behind a required input flag, which must exist.
    pub fn input(&self, flag: &str) -> CliResult<&Path> {
        let path = match flag {
            "catalog" => &self.catalog,
            "claims" => &self.claims,
            "eligibility" => &self.eligibility,
            "demographics" => &self.demographics,
            "model" => &self.model,
            other => unreachable!("no input flag {other}"),
        };
        let path = path
            .as_deref()
            .ok_or_else(|| CliError::Validation(format!("missing required input --{flag}")))?;
        if !path.exists() {
            return Err(CliError::Validation(format!("--{flag} {}: no such file", path.display())));
        }
        Ok(path)
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Validation("missing required output directory --out".into()))
    }
}
