//! Synthetic claims populations with planted risk.
//!
//! Each person gets survey answers drawn from the configured distribution,
//! claims that evidence exactly those answers inside the survey window, and a
//! proxy-outcome admission after the prediction date with probability given
//! by the outcome model. Person `i` draws from ChaCha8 stream `i` of the
//! configured seed, so output is byte-identical for a given config.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{is_proxy_diagnosis, CcsrCatalog, DiagnosisCode, ProxyCodeSet};
use crate::dates::{add_months, age_in_years, sub_months, YearMonth};
use crate::features::{answers_to_features, SurveyAnswers, SurveyCondition, SurveyFeatureGroups, SURVEY_LOOKBACK_MONTHS};
use crate::ingest::{
    parse_claims, parse_demographics, write_claims, write_demographics, write_eligibility, ClaimRecord, ClaimType,
    Demographics, EligibilitySpan, Gender, IngestError,
};
use crate::models::LogisticModel;

pub const CLAIMS_FILE: &str = "claims.csv";
pub const ELIGIBILITY_FILE: &str = "eligibility.csv";
pub const DEMOGRAPHICS_FILE: &str = "demographics.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRUTH_HEADER: [&str; 3] = ["person_id", "generating_probability", "planted_outcome"];

const OUTCOME_MONTHS: u32 = 3;
// P(count = k) for k = 0, 1, 2, 3
const ADMISSION_PMF: [f64; 4] = [0.80, 0.12, 0.05, 0.03];
const ER_VISIT_PMF: [f64; 4] = [0.75, 0.15, 0.07, 0.03];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("truth file line {line}: {message}")]
    BadTruthRow { line: u64, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn default_prediction_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2016, 9, 30).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_persons: usize,
    pub elder_fraction: f64,
    pub male_fraction: f64,
    /// Keyed by [`SurveyCondition::key`]; absent conditions have prevalence 0.
    pub condition_prevalences: BTreeMap<String, f64>,
    /// `None` uses the frozen survey model.
    #[serde(skip)]
    pub outcome_model: Option<LogisticModel>,
    pub months_of_history: u32,
    /// Upper bound on background office claims per person (neutral codes).
    pub max_noise_claims: u32,
    pub prediction_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        use SurveyCondition::*;
        let prevalences = [
            (Copd, 0.06),
            (Asthma, 0.08),
            (Obesity, 0.12),
            (Diabetes, 0.15),
            (Hypertension, 0.30),
            (CongestiveHeartFailure, 0.04),
            (MyocardialInfarction, 0.03),
            (RheumaticHeartDisease, 0.02),
            (Stroke, 0.03),
            (SickleCellHivTransplant, 0.01),
            (ChronicKidneyDisease, 0.05),
            (Hemodialysis, 0.01),
            (LiverDisease, 0.03),
            (PriorRespiratoryInfection, 0.10),
            (Cancer, 0.06),
            (Neurocognitive, 0.03),
            (Pregnancy, 0.02),
        ];
        Self {
            n_persons: 10_000,
            elder_fraction: 0.21,
            male_fraction: 0.5,
            condition_prevalences: prevalences.iter().map(|(c, p)| (c.key().to_string(), *p)).collect(),
            outcome_model: None,
            months_of_history: 18,
            max_noise_claims: 3,
            prediction_date: default_prediction_date(),
            seed: 2016,
        }
    }
}

impl SynthConfig {
    /// Every condition at prevalence 0.4.
    ///
    /// Each condition enters the survey model both alone and multiplied by age,
    /// so its main effect is an extrapolation to age 0. Refitting those main
    /// effects to within 0.1 at 200k persons needs far more condition carriers
    /// than realistic prevalences provide.
    pub fn recovery(n_persons: usize, seed: u64) -> Self {
        Self {
            n_persons,
            seed,
            condition_prevalences: SurveyCondition::ALL.iter().map(|c| (c.key().to_string(), 0.4)).collect(),
            ..Self::default()
        }
    }

    pub fn prevalence(&self, condition: SurveyCondition) -> f64 {
        self.condition_prevalences.get(condition.key()).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_persons < 1 {
            return bad("n_persons must be at least 1".into());
        }
        for (name, p) in [("elder_fraction", self.elder_fraction), ("male_fraction", self.male_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        for (key, p) in &self.condition_prevalences {
            if !SurveyCondition::ALL.iter().any(|c| c.key() == key) {
                return bad(format!("unknown condition {key:?}"));
            }
            if !(0.0..=1.0).contains(p) {
                return bad(format!("prevalence of {key} must be in [0, 1]"));
            }
        }
        if self.months_of_history < SURVEY_LOOKBACK_MONTHS + 1 {
            return bad(format!("months_of_history must be at least {}", SURVEY_LOOKBACK_MONTHS + 1));
        }
        Ok(())
    }
}

/// Diagnosis codes usable by the generator, all taken from the catalog.
#[derive(Debug, Clone)]
pub struct CodePools {
    /// Codes that evidence exactly one condition, indexed by condition.
    pub condition: Vec<Vec<DiagnosisCode>>,
    /// Codes that evidence no condition and are not proxy diagnoses.
    pub neutral: Vec<DiagnosisCode>,
    /// Codes that label a facility stay as a proxy outcome.
    pub outcome: Vec<DiagnosisCode>,
}

impl CodePools {
    pub fn new(catalog: &CcsrCatalog, groups: &SurveyFeatureGroups, proxy: &ProxyCodeSet) -> Self {
        let mut condition = vec![Vec::new(); SurveyCondition::ALL.len()];
        let mut neutral = Vec::new();
        let mut outcome = Vec::new();
        for (code, _) in catalog.codes() {
            let mask = groups.mask_for_code(catalog, code);
            let is_proxy = is_proxy_diagnosis(catalog, proxy, code);
            if mask.count_ones() == 1 {
                condition[mask.trailing_zeros() as usize].push(code.clone());
            } else if mask == 0 && !is_proxy {
                neutral.push(code.clone());
            }
            if is_proxy {
                outcome.push(code.clone());
            }
        }
        for (c, pool) in SurveyCondition::ALL.iter().zip(&condition) {
            assert!(!pool.is_empty(), "catalog has no code exclusive to {}", c.key());
        }
        assert!(!neutral.is_empty() && !outcome.is_empty(), "catalog lacks neutral or proxy codes");
        Self {
            condition,
            neutral,
            outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPerson {
    pub demographics: Demographics,
    pub answers: SurveyAnswers,
    pub eligibility: Vec<YearMonth>,
    pub claims: Vec<ClaimRecord>,
    pub generating_probability: f64,
    pub planted_outcome: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub person_id: String,
    pub generating_probability: f64,
    pub planted_outcome: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub prediction_date: NaiveDate,
    pub persons: Vec<SyntheticPerson>,
}

pub fn person_id(index: usize) -> String {
    format!("P{index:07}")
}

fn sample_count(rng: &mut ChaCha8Rng, pmf: &[f64]) -> u32 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32;
        }
    }
    (pmf.len() - 1) as u32
}

fn uniform_date(rng: &mut ChaCha8Rng, first: NaiveDate, last: NaiveDate) -> NaiveDate {
    let span = (last - first).num_days().max(0) as u64;
    first + Days::new(rng.gen_range(0..=span))
}

fn generate_person(
    index: usize,
    config: &SynthConfig,
    model: &LogisticModel,
    pools: &CodePools,
) -> SyntheticPerson {
    let pd = config.prediction_date;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let id = person_id(index);

    let age: i32 = if rng.gen_bool(config.elder_fraction) {
        rng.gen_range(65..=95)
    } else {
        rng.gen_range(18..=64)
    };
    let gender = if rng.gen_bool(config.male_fraction) {
        Gender::Male
    } else {
        Gender::Female
    };
    // birthdays in (pd - (age+1) years, pd - age years]
    let oldest = sub_months(pd, 12 * (age as u32 + 1)) + Days::new(1);
    let youngest = sub_months(pd, 12 * age as u32);
    let birth_date = uniform_date(&mut rng, oldest, youngest);
    debug_assert_eq!(age_in_years(birth_date, pd), age);

    let mut answers = SurveyAnswers::new(age, gender);
    answers.prior_admissions = sample_count(&mut rng, &ADMISSION_PMF);
    answers.prior_er_visits = sample_count(&mut rng, &ER_VISIT_PMF);
    for c in SurveyCondition::ALL {
        answers.conditions[c.index()] = rng.gen_bool(config.prevalence(c));
    }
    let generating_probability = model.score(&answers_to_features(&answers)).expect("survey schema");
    let planted_outcome = rng.gen_bool(generating_probability);

    let first_month = YearMonth::of(pd).offset(1 - config.months_of_history as i64);
    let last_month = YearMonth::of(pd).offset(OUTCOME_MONTHS as i64);
    let eligibility: Vec<YearMonth> = YearMonth::range_inclusive(first_month, last_month).collect();

    let window_start = sub_months(pd, SURVEY_LOOKBACK_MONTHS);
    let mut claims = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, kind: ClaimType, date: NaiveDate, pool: &[DiagnosisCode]| {
        claims.push(ClaimRecord {
            person_id: id.clone(),
            claim_id: format!("{id}-C{:03}", claims.len() + 1),
            from_date: date,
            claim_type: kind,
            diagnoses: vec![pool.choose(rng).expect("non-empty pool").clone()],
        });
    };
    for c in SurveyCondition::ALL {
        if answers.has(c) {
            for _ in 0..rng.gen_range(1..=3) {
                let date = uniform_date(&mut rng, window_start, pd);
                push(&mut rng, ClaimType::Office, date, &pools.condition[c.index()]);
            }
        }
    }
    for (count, kind) in [
        (answers.prior_admissions, ClaimType::Inpatient),
        (answers.prior_er_visits, ClaimType::Er),
    ] {
        for _ in 0..count {
            let date = uniform_date(&mut rng, window_start, pd);
            push(&mut rng, kind, date, &pools.neutral);
        }
    }
    let coverage_end = last_month.last_day();
    for _ in 0..rng.gen_range(0..=config.max_noise_claims) {
        let date = uniform_date(&mut rng, first_month.first_day(), coverage_end);
        push(&mut rng, ClaimType::Office, date, &pools.neutral);
    }
    if planted_outcome {
        let date = uniform_date(&mut rng, pd + Days::new(1), add_months(pd, OUTCOME_MONTHS));
        push(&mut rng, ClaimType::Inpatient, date, &pools.outcome);
    }

    SyntheticPerson {
        demographics: Demographics {
            person_id: id,
            birth_date,
            gender,
            death_date: None,
        },
        answers,
        eligibility,
        claims,
        generating_probability,
        planted_outcome,
    }
}

/// Generates a population using codes from the bundled catalog.
pub fn generate_population(config: &SynthConfig) -> Result<Population, SynthError> {
    generate_population_with(config, &CcsrCatalog::bundled())
}

pub fn generate_population_with(config: &SynthConfig, catalog: &CcsrCatalog) -> Result<Population, SynthError> {
    config.validate()?;
    let model = config.outcome_model.clone().unwrap_or_else(LogisticModel::frozen_survey);
    let pools = CodePools::new(catalog, &SurveyFeatureGroups::default(), &ProxyCodeSet::default());
    let persons = (0..config.n_persons)
        .map(|i| generate_person(i, config, &model, &pools))
        .collect();
    Ok(Population {
        prediction_date: config.prediction_date,
        persons,
    })
}

/// Paths of the files written by [`Population::write_files`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub claims: PathBuf,
    pub eligibility: PathBuf,
    pub demographics: PathBuf,
    pub truth: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            claims: dir.join(CLAIMS_FILE),
            eligibility: dir.join(ELIGIBILITY_FILE),
            demographics: dir.join(DEMOGRAPHICS_FILE),
            truth: dir.join(TRUTH_FILE),
        }
    }
}

impl Population {
    pub fn demographics(&self) -> Vec<Demographics> {
        self.persons.iter().map(|p| p.demographics.clone()).collect()
    }

    pub fn claims(&self) -> Vec<ClaimRecord> {
        self.persons.iter().flat_map(|p| p.claims.iter().cloned()).collect()
    }

    pub fn eligibility(&self) -> Vec<EligibilitySpan> {
        self.persons
            .iter()
            .flat_map(|p| {
                p.eligibility.iter().map(|&month| EligibilitySpan {
                    person_id: p.demographics.person_id.clone(),
                    month,
                    covered: true,
                })
            })
            .collect()
    }

    pub fn truth(&self) -> Vec<TruthRow> {
        self.persons
            .iter()
            .map(|p| TruthRow {
                person_id: p.demographics.person_id.clone(),
                generating_probability: p.generating_probability,
                planted_outcome: p.planted_outcome,
            })
            .collect()
    }

    pub fn write_files(&self, dir: &Path) -> Result<SynthFiles, SynthError> {
        std::fs::create_dir_all(dir)?;
        let files = SynthFiles::in_dir(dir);
        write_claims(BufWriter::new(File::create(&files.claims)?), &self.claims())?;
        write_eligibility(BufWriter::new(File::create(&files.eligibility)?), &self.eligibility())?;
        write_demographics(BufWriter::new(File::create(&files.demographics)?), &self.demographics())?;
        write_truth(BufWriter::new(File::create(&files.truth)?), &self.truth())?;
        Ok(files)
    }
}

pub fn write_truth<W: Write>(writer: W, rows: &[TruthRow]) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRUTH_HEADER)?;
    for r in rows {
        let p = r.generating_probability.to_string();
        w.write_record([r.person_id.as_str(), &p, if r.planted_outcome { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(reader: R) -> Result<Vec<TruthRow>, SynthError> {
    let mut rdr = crate::ingest::csv_builder().from_reader(reader);
    if !rdr.headers()?.iter().eq(TRUTH_HEADER) {
        return Err(SynthError::BadTruthRow {
            line: 1,
            message: "expected header person_id,generating_probability,planted_outcome".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if crate::ingest::is_blank(&rec) {
            continue;
        }
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: &str| SynthError::BadTruthRow {
            line,
            message: message.into(),
        };
        if rec.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let generating_probability = rec[1]
            .parse::<f64>()
            .ok()
            .filter(|p| (0.0..=1.0).contains(p))
            .ok_or_else(|| bad("probability must be a number in [0, 1]"))?;
        let planted_outcome = match &rec[2] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("planted_outcome must be 0 or 1")),
        };
        rows.push(TruthRow {
            person_id: rec[0].to_string(),
            generating_probability,
            planted_outcome,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgeBandSummary {
    pub band: &'static str,
    pub persons: usize,
    pub outcomes: usize,
    pub outcome_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSummary {
    pub n_persons: usize,
    pub n_claims: usize,
    pub outcomes: usize,
    pub elder_share: f64,
    pub mean_generating_probability: f64,
    pub bands: Vec<AgeBandSummary>,
}

const AGE_BANDS: [(&str, i32, i32); 5] = [
    ("0-17", 0, 17),
    ("18-44", 18, 44),
    ("45-64", 45, 64),
    ("65-74", 65, 74),
    ("75+", 75, i32::MAX),
];

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts persons, claims and planted outcomes, with outcome prevalence by
/// age band (age on `as_of`). Truth rows for unknown persons are ignored.
pub fn describe_population(
    demographics: &[Demographics],
    claims: &[ClaimRecord],
    truth: &[TruthRow],
    as_of: NaiveDate,
) -> PopulationSummary {
    let by_id: BTreeMap<&str, &TruthRow> = truth.iter().map(|t| (t.person_id.as_str(), t)).collect();
    let mut bands: Vec<AgeBandSummary> = AGE_BANDS
        .iter()
        .map(|&(band, _, _)| AgeBandSummary {
            band,
            persons: 0,
            outcomes: 0,
            outcome_rate: 0.0,
        })
        .collect();
    let mut elders = 0;
    let mut outcomes = 0;
    let mut prob_sum = 0.0;
    for d in demographics {
        let age = age_in_years(d.birth_date, as_of);
        elders += (age >= 65) as usize;
        let outcome = by_id.get(d.person_id.as_str()).is_some_and(|t| t.planted_outcome);
        prob_sum += by_id.get(d.person_id.as_str()).map_or(0.0, |t| t.generating_probability);
        outcomes += outcome as usize;
        if let Some(b) = AGE_BANDS.iter().position(|&(_, lo, hi)| (lo..=hi).contains(&age)) {
            bands[b].persons += 1;
            bands[b].outcomes += outcome as usize;
        }
    }
    for b in &mut bands {
        b.outcome_rate = rate(b.outcomes, b.persons);
    }
    PopulationSummary {
        n_persons: demographics.len(),
        n_claims: claims.len(),
        outcomes,
        elder_share: rate(elders, demographics.len()),
        mean_generating_probability: if demographics.is_empty() {
            0.0
        } else {
            prob_sum / demographics.len() as f64
        },
        bands,
    }
}

/// [`describe_population`] over files written by [`Population::write_files`].
pub fn describe_files(files: &SynthFiles, as_of: NaiveDate) -> Result<PopulationSummary, SynthError> {
    let demographics = parse_demographics(File::open(&files.demographics)?)?.records;
    let claims = parse_claims(File::open(&files.claims)?)?.records;
    let truth = read_truth(File::open(&files.truth)?)?;
    Ok(describe_population(&demographics, &claims, &truth, as_of))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SurveyFeaturizer;
    use crate::ingest::PersonTimeline;

    fn small(n: usize) -> SynthConfig {
        SynthConfig {
            n_persons: n,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = generate_population(&small(200)).unwrap();
        let b = generate_population(&small(200)).unwrap();
        assert_eq!(a, b);
        let c = generate_population(&SynthConfig { seed: 7, ..small(200) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn persons_do_not_depend_on_population_size() {
        let a = generate_population(&small(50)).unwrap();
        let b = generate_population(&small(80)).unwrap();
        assert_eq!(a.persons[..], b.persons[..50]);
    }

    #[test]
    fn claims_reproduce_answers() {
        let pop = generate_population(&SynthConfig::recovery(300, 3)).unwrap();
        let catalog = CcsrCatalog::bundled();
        let f = SurveyFeaturizer::new(&catalog, &SurveyFeatureGroups::default());
        for p in &pop.persons {
            let t = PersonTimeline::new(p.demographics.clone(), p.eligibility.clone(), p.claims.clone());
            assert_eq!(f.answers(&t, pop.prediction_date), p.answers, "{}", p.demographics.person_id);
        }
    }

    #[test]
    fn zero_prevalence_means_no_conditions() {
        let cfg = SynthConfig {
            condition_prevalences: BTreeMap::new(),
            ..small(300)
        };
        let pop = generate_population(&cfg).unwrap();
        let catalog = CcsrCatalog::bundled();
        let f = SurveyFeaturizer::new(&catalog, &SurveyFeatureGroups::default());
        for p in &pop.persons {
            let t = PersonTimeline::new(p.demographics.clone(), p.eligibility.clone(), p.claims.clone());
            assert_eq!(f.answers(&t, pop.prediction_date).conditions, [false; 17]);
        }
    }

    #[test]
    fn codes_come_from_catalog_and_dates_from_coverage() {
        let pop = generate_population(&small(500)).unwrap();
        let catalog = CcsrCatalog::bundled();
        for p in &pop.persons {
            assert_eq!(p.eligibility.len(), 18 + 3);
            let first = p.eligibility[0].first_day();
            let last = p.eligibility.last().unwrap().last_day();
            for c in &p.claims {
                assert!(c.diagnoses.iter().all(|d| !catalog.categories_for(d).is_empty()));
                assert!(first <= c.from_date && c.from_date <= last);
            }
            assert!(p.answers.age_years >= 18 && p.answers.age_years <= 95);
            assert_eq!(age_in_years(p.demographics.birth_date, pop.prediction_date), p.answers.age_years);
        }
    }

    #[test]
    fn outcome_rate_tracks_generating_probability() {
        let pop = generate_population(&small(20_000)).unwrap();
        let truth = pop.truth();
        let mean: f64 = truth.iter().map(|t| t.generating_probability).sum::<f64>() / truth.len() as f64;
        let observed = truth.iter().filter(|t| t.planted_outcome).count() as f64 / truth.len() as f64;
        // binomial sd of the observed rate is about 0.1 * mean here
        assert!((observed - mean).abs() < 0.25 * mean, "observed {observed}, mean {mean}");
    }

    #[test]
    fn files_round_trip_and_describe() {
        let dir = tempfile::tempdir().unwrap();
        let pop = generate_population(&small(1000)).unwrap();
        let files = pop.write_files(dir.path()).unwrap();
        let s = describe_files(&files, pop.prediction_date).unwrap();
        assert_eq!(s.n_persons, 1000);
        assert_eq!(s.n_claims, pop.claims().len());
        assert_eq!(s.outcomes, pop.truth().iter().filter(|t| t.planted_outcome).count());
        assert!((s.elder_share - 0.21).abs() < 0.03, "{}", s.elder_share);
        assert_eq!(s.bands.iter().map(|b| b.persons).sum::<usize>(), 1000);
        assert_eq!(read_truth(File::open(&files.truth).unwrap()).unwrap(), pop.truth());

        let again = tempfile::tempdir().unwrap();
        generate_population(&small(1000)).unwrap().write_files(again.path()).unwrap();
        for name in [CLAIMS_FILE, ELIGIBILITY_FILE, DEMOGRAPHICS_FILE, TRUTH_FILE] {
            assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), std::fs::read(again.path().join(name)).unwrap());
        }
    }

    #[test]
    fn empty_summary() {
        let s = describe_population(&[], &[], &[], default_prediction_date());
        assert_eq!((s.n_persons, s.n_claims, s.outcomes), (0, 0, 0));
        assert_eq!(s.elder_share, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { n_persons: 0, ..small(1) }.validate().is_err());
        assert!(SynthConfig { elder_fraction: 1.5, ..small(1) }.validate().is_err());
        let mut cfg = small(1);
        cfg.condition_prevalences.insert("gout".into(), 0.1);
        assert!(cfg.validate().is_err());
        assert!(SynthConfig { months_of_history: 6, ..small(1) }.validate().is_err());
    }
}
