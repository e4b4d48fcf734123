use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::{Map, Value};

use super::{FeatureSchema, FeatureVector};
use crate::codes::{CcsrCatalog, CcsrCategory, DiagnosisCode};
use crate::dates::{age_in_years, sub_months};
use crate::ingest::{ClaimType, Gender, PersonTimeline};

pub const SURVEY_SCHEMA_ID: &str = "survey";
pub const SURVEY_LOOKBACK_MONTHS: u32 = 12;

pub const MIN_SURVEY_AGE: i64 = 18;
pub const MAX_SURVEY_AGE: i64 = 120;

/// The condition questions of the health-risk questionnaire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SurveyCondition {
    Copd,
    Asthma,
    Obesity,
    Diabetes,
    Hypertension,
    CongestiveHeartFailure,
    MyocardialInfarction,
    RheumaticHeartDisease,
    Stroke,
    SickleCellHivTransplant,
    ChronicKidneyDisease,
    Hemodialysis,
    LiverDisease,
    PriorRespiratoryInfection,
    Cancer,
    Neurocognitive,
    Pregnancy,
}

impl SurveyCondition {
    pub const ALL: [SurveyCondition; 17] = [
        SurveyCondition::Copd,
        SurveyCondition::Asthma,
        SurveyCondition::Obesity,
        SurveyCondition::Diabetes,
        SurveyCondition::Hypertension,
        SurveyCondition::CongestiveHeartFailure,
        SurveyCondition::MyocardialInfarction,
        SurveyCondition::RheumaticHeartDisease,
        SurveyCondition::Stroke,
        SurveyCondition::SickleCellHivTransplant,
        SurveyCondition::ChronicKidneyDisease,
        SurveyCondition::Hemodialysis,
        SurveyCondition::LiverDisease,
        SurveyCondition::PriorRespiratoryInfection,
        SurveyCondition::Cancer,
        SurveyCondition::Neurocognitive,
        SurveyCondition::Pregnancy,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Feature name and JSON key.
    pub fn key(self) -> &'static str {
        match self {
            SurveyCondition::Copd => "copd",
            SurveyCondition::Asthma => "asthma",
            SurveyCondition::Obesity => "obesity",
            SurveyCondition::Diabetes => "diabetes",
            SurveyCondition::Hypertension => "hypertension",
            SurveyCondition::CongestiveHeartFailure => "congestive_heart_failure",
            SurveyCondition::MyocardialInfarction => "myocardial_infarction",
            SurveyCondition::RheumaticHeartDisease => "rheumatic_heart_disease",
            SurveyCondition::Stroke => "stroke",
            SurveyCondition::SickleCellHivTransplant => "sickle_cell_hiv_transplant",
            SurveyCondition::ChronicKidneyDisease => "chronic_kidney_disease",
            SurveyCondition::Hemodialysis => "hemodialysis",
            SurveyCondition::LiverDisease => "liver_disease",
            SurveyCondition::PriorRespiratoryInfection => "prior_respiratory_infection",
            SurveyCondition::Cancer => "cancer",
            SurveyCondition::Neurocognitive => "neurocognitive",
            SurveyCondition::Pregnancy => "pregnancy",
        }
    }

    pub fn interaction_key(self) -> String {
        format!("{}_x_age", self.key())
    }

    /// Question wording shown to survey respondents.
    pub fn question(self) -> &'static str {
        match self {
            SurveyCondition::Copd => {
                "Chronic obstructive pulmonary disease (COPD) or emphysema, cystic fibrosis, or chronic bronchitis"
            }
            SurveyCondition::Asthma => "Asthma",
            SurveyCondition::Obesity => "Obesity",
            SurveyCondition::Diabetes => "Diabetes (other than when you were pregnant)",
            SurveyCondition::Hypertension => "Hypertension (also called high blood pressure)",
            SurveyCondition::CongestiveHeartFailure => "Congestive Heart Failure",
            SurveyCondition::MyocardialInfarction => "Heart attack (also called myocardial infarction)",
            SurveyCondition::RheumaticHeartDisease => "Rheumatic heart disease",
            SurveyCondition::Stroke => "Stroke",
            SurveyCondition::SickleCellHivTransplant => "Sickle cell anemia/HIV infection/Transplant",
            SurveyCondition::ChronicKidneyDisease => "Chronic kidney disease",
            SurveyCondition::Hemodialysis => "Hemodialysis",
            SurveyCondition::LiverDisease => "Liver disease",
            SurveyCondition::PriorRespiratoryInfection => {
                "Pneumonia, acute bronchitis, influenza or other acute respiratory infection"
            }
            SurveyCondition::Cancer => "Cancer",
            SurveyCondition::Neurocognitive => "Neurocognitive conditions",
            SurveyCondition::Pregnancy => "Pregnancy",
        }
    }
}

/// A CCSR category, or every category of a body system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupMember {
    Category(CcsrCategory),
    BodySystem(String),
}

impl GroupMember {
    pub fn matches(&self, category: &CcsrCategory) -> bool {
        match self {
            GroupMember::Category(c) => c == category,
            GroupMember::BodySystem(prefix) => category.body_system() == prefix,
        }
    }
}

/// Which CCSR categories evidence each survey condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyFeatureGroups {
    groups: BTreeMap<SurveyCondition, Vec<GroupMember>>,
}

impl Default for SurveyFeatureGroups {
    fn default() -> Self {
        use SurveyCondition::*;
        let cats = |ids: &[&str]| -> Vec<GroupMember> {
            ids.iter()
                .map(|id| GroupMember::Category(CcsrCategory::parse(id).expect("valid category literal")))
                .collect()
        };
        let prefix = |p: &str| vec![GroupMember::BodySystem(p.to_string())];
        let groups = BTreeMap::from([
            (Copd, cats(&["RSP008", "END012"])),
            (Asthma, cats(&["RSP009"])),
            (Obesity, cats(&["END009"])),
            (Diabetes, cats(&["END002", "END003", "END004", "END005"])),
            (Hypertension, cats(&["CIR007", "CIR008"])),
            (CongestiveHeartFailure, cats(&["CIR019"])),
            (MyocardialInfarction, cats(&["CIR009", "CIR010"])),
            (RheumaticHeartDisease, cats(&["CIR001", "CIR002", "CIR011", "CIR014", "CIR015"])),
            (Stroke, cats(&["CIR020", "CIR021"])),
            (SickleCellHivTransplant, cats(&["BLD005", "INF006", "FAC023"])),
            (ChronicKidneyDisease, cats(&["GEN003"])),
            (Hemodialysis, cats(&["GEN002"])),
            (LiverDisease, cats(&["DIG019"])),
            (PriorRespiratoryInfection, cats(&["RSP002", "RSP003", "RSP005", "RSP006"])),
            (Cancer, prefix("NEO")),
            (Neurocognitive, cats(&["NVS011", "CIR022", "CIR025"])),
            (Pregnancy, prefix("PRG")),
        ]);
        Self { groups }
    }
}

impl SurveyFeatureGroups {
    pub fn members(&self, condition: SurveyCondition) -> &[GroupMember] {
        self.groups.get(&condition).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Conditions evidenced by a single category.
    pub fn conditions_for(&self, category: &CcsrCategory) -> impl Iterator<Item = SurveyCondition> + '_ {
        let category = category.clone();
        self.groups
            .iter()
            .filter(move |(_, members)| members.iter().any(|m| m.matches(&category)))
            .map(|(c, _)| *c)
    }

    /// Bitmask over [`SurveyCondition::index`] for every condition a code evidences.
    pub fn mask_for_code(&self, catalog: &CcsrCatalog, code: &DiagnosisCode) -> u32 {
        catalog
            .categories_for(code)
            .iter()
            .flat_map(|cat| self.conditions_for(cat))
            .fold(0, |mask, c| mask | (1 << c.index()))
    }
}

/// Validation failure for one survey field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Questionnaire responses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyAnswers {
    pub age_years: i32,
    pub gender: Gender,
    pub prior_admissions: u32,
    pub prior_er_visits: u32,
    pub conditions: [bool; 17],
}

impl SurveyAnswers {
    pub fn new(age_years: i32, gender: Gender) -> Self {
        Self {
            age_years,
            gender,
            prior_admissions: 0,
            prior_er_visits: 0,
            conditions: [false; 17],
        }
    }

    pub fn with(mut self, condition: SurveyCondition) -> Self {
        self.conditions[condition.index()] = true;
        self
    }

    pub fn has(&self, condition: SurveyCondition) -> bool {
        self.conditions[condition.index()]
    }

    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let age = self.age_years as i64;
        if (MIN_SURVEY_AGE..=MAX_SURVEY_AGE).contains(&age) {
            Ok(())
        } else {
            Err(vec![FieldError::new(
                "age_years",
                format!("must be between {MIN_SURVEY_AGE} and {MAX_SURVEY_AGE}"),
            )])
        }
    }

    /// Parses the snake_case JSON body, collecting every field-level problem.
    ///
    /// `age_years` and `gender` are required; counts default to 0 and
    /// condition answers to `false`.
    pub fn from_json(value: &Value) -> Result<Self, Vec<FieldError>> {
        let Some(obj) = value.as_object() else {
            return Err(vec![FieldError::new("", "body must be a JSON object")]);
        };
        let mut errors = Vec::new();

        let age_years = match obj.get("age_years") {
            None => {
                errors.push(FieldError::new("age_years", "is required"));
                None
            }
            Some(v) => match v.as_i64() {
                Some(a) if (MIN_SURVEY_AGE..=MAX_SURVEY_AGE).contains(&a) => Some(a as i32),
                Some(_) => {
                    errors.push(FieldError::new(
                        "age_years",
                        format!("must be between {MIN_SURVEY_AGE} and {MAX_SURVEY_AGE}"),
                    ));
                    None
                }
                None => {
                    errors.push(FieldError::new("age_years", "must be an integer"));
                    None
                }
            },
        };

        let gender = match obj.get("gender").map(|g| g.as_str()) {
            None => {
                errors.push(FieldError::new("gender", "is required"));
                None
            }
            Some(Some("male")) => Some(Gender::Male),
            Some(Some("female")) => Some(Gender::Female),
            Some(Some("unknown")) => Some(Gender::Unknown),
            Some(_) => {
                errors.push(FieldError::new("gender", "must be one of \"male\", \"female\", \"unknown\""));
                None
            }
        };

        let mut count = |field: &str| -> u32 {
            match obj.get(field) {
                None => 0,
                Some(v) => match v.as_u64() {
                    Some(n) if n <= u32::MAX as u64 => n as u32,
                    _ => {
                        errors.push(FieldError::new(field, "must be a non-negative integer"));
                        0
                    }
                },
            }
        };
        let prior_admissions = count("prior_admissions");
        let prior_er_visits = count("prior_er_visits");

        let mut conditions = [false; 17];
        for c in SurveyCondition::ALL {
            match obj.get(c.key()) {
                None => {}
                Some(Value::Bool(b)) => conditions[c.index()] = *b,
                Some(_) => errors.push(FieldError::new(c.key(), "must be a boolean")),
            }
        }

        let known = |k: &str| {
            matches!(k, "age_years" | "gender" | "prior_admissions" | "prior_er_visits")
                || SurveyCondition::ALL.iter().any(|c| c.key() == k)
        };
        for key in obj.keys().filter(|k| !known(k)) {
            errors.push(FieldError::new(key, "unknown field"));
        }

        match (age_years, gender) {
            (Some(age_years), Some(gender)) if errors.is_empty() => Ok(Self {
                age_years,
                gender,
                prior_admissions,
                prior_er_visits,
                conditions,
            }),
            _ => Err(errors),
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("age_years".into(), self.age_years.into());
        let gender = match self.gender {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        };
        obj.insert("gender".into(), gender.into());
        obj.insert("prior_admissions".into(), self.prior_admissions.into());
        obj.insert("prior_er_visits".into(), self.prior_er_visits.into());
        for c in SurveyCondition::ALL {
            obj.insert(c.key().into(), self.has(c).into());
        }
        Value::Object(obj)
    }
}

/// The 38-feature survey schema: age, male, two utilization counts, 17
/// condition indicators and their 17 age interactions.
pub fn survey_schema() -> Arc<FeatureSchema> {
    static SCHEMA: OnceLock<Arc<FeatureSchema>> = OnceLock::new();
    SCHEMA
        .get_or_init(|| {
            let mut names: Vec<String> = ["age", "gender_male", "prior_admissions", "prior_er_visits"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            names.extend(SurveyCondition::ALL.iter().map(|c| c.key().to_string()));
            names.extend(SurveyCondition::ALL.iter().map(|c| c.interaction_key()));
            FeatureSchema::new(SURVEY_SCHEMA_ID, names).expect("unique survey feature names")
        })
        .clone()
}

fn survey_vector(age: i32, male: bool, admissions: u32, er_visits: u32, conditions: &[bool; 17]) -> FeatureVector {
    let age = age as f64;
    let mut values = Vec::with_capacity(38);
    values.extend([age, male as u8 as f64, admissions as f64, er_visits as f64]);
    values.extend(conditions.iter().map(|&c| c as u8 as f64));
    values.extend(conditions.iter().map(|&c| c as u8 as f64 * age));
    FeatureVector::new(survey_schema(), values).expect("survey features are finite")
}

pub fn answers_to_features(answers: &SurveyAnswers) -> FeatureVector {
    survey_vector(
        answers.age_years,
        answers.gender == Gender::Male,
        answers.prior_admissions,
        answers.prior_er_visits,
        &answers.conditions,
    )
}

/// Survey features from claims, with condition masks precomputed per catalog code.
#[derive(Debug, Clone)]
pub struct SurveyFeaturizer {
    masks: HashMap<DiagnosisCode, u32>,
}

impl SurveyFeaturizer {
    pub fn new(catalog: &CcsrCatalog, groups: &SurveyFeatureGroups) -> Self {
        let masks = catalog
            .codes()
            .map(|(code, _)| (code.clone(), groups.mask_for_code(catalog, code)))
            .filter(|(_, m)| *m != 0)
            .collect();
        Self { masks }
    }

    pub fn schema(&self) -> Arc<FeatureSchema> {
        survey_schema()
    }

    /// Uses claims dated in `[prediction_date - 12 months, prediction_date]`.
    pub fn answers(&self, timeline: &PersonTimeline, prediction_date: NaiveDate) -> SurveyAnswers {
        let start = sub_months(prediction_date, SURVEY_LOOKBACK_MONTHS);
        let window = timeline.claims_between(start, prediction_date);

        let mut admissions = Vec::new();
        let mut er_visits = Vec::new();
        let mut mask = 0u32;
        for claim in window {
            match claim.claim_type {
                ClaimType::Inpatient => admissions.push(claim.claim_id.as_str()),
                ClaimType::Er => er_visits.push(claim.claim_id.as_str()),
                _ => {}
            }
            for dx in &claim.diagnoses {
                mask |= self.masks.get(dx).copied().unwrap_or(0);
            }
        }
        admissions.sort_unstable();
        admissions.dedup();
        er_visits.sort_unstable();
        er_visits.dedup();

        let mut conditions = [false; 17];
        for c in SurveyCondition::ALL {
            conditions[c.index()] = mask & (1 << c.index()) != 0;
        }
        SurveyAnswers {
            age_years: age_in_years(timeline.demographics.birth_date, prediction_date),
            gender: timeline.demographics.gender,
            prior_admissions: admissions.len() as u32,
            prior_er_visits: er_visits.len() as u32,
            conditions,
        }
    }

    pub fn extract(&self, timeline: &PersonTimeline, prediction_date: NaiveDate) -> FeatureVector {
        answers_to_features(&self.answers(timeline, prediction_date))
    }
}

pub fn extract_survey_features(
    timeline: &PersonTimeline,
    prediction_date: NaiveDate,
    catalog: &CcsrCatalog,
    groups: &SurveyFeatureGroups,
) -> FeatureVector {
    SurveyFeaturizer::new(catalog, groups).extract(timeline, prediction_date)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::normalize_code;
    use crate::dates::parse_date;
    use crate::ingest::{ClaimRecord, Demographics};
    use serde_json::json;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn timeline(gender: Gender, claims: &[(&str, &str, ClaimType, &[&str])]) -> PersonTimeline {
        let claims = claims
            .iter()
            .map(|(id, date, kind, codes)| ClaimRecord {
                person_id: "p".into(),
                claim_id: id.to_string(),
                from_date: d(date),
                claim_type: *kind,
                diagnoses: codes.iter().map(|c| normalize_code(c).unwrap()).collect(),
            })
            .collect();
        PersonTimeline::new(
            Demographics {
                person_id: "p".into(),
                birth_date: d("1946-03-01"),
                gender,
                death_date: None,
            },
            vec![],
            claims,
        )
    }

    fn extract(t: &PersonTimeline) -> FeatureVector {
        extract_survey_features(t, d("2016-09-30"), &CcsrCatalog::bundled(), &SurveyFeatureGroups::default())
    }

    #[test]
    fn schema_layout() {
        let s = survey_schema();
        assert_eq!(s.len(), 38);
        assert_eq!(&s.names[..4], ["age", "gender_male", "prior_admissions", "prior_er_visits"]);
        assert_eq!(s.names[4], "copd");
        assert_eq!(s.names[20], "pregnancy");
        assert_eq!(s.names[21], "copd_x_age");
        assert_eq!(s.names[37], "pregnancy_x_age");
    }

    #[test]
    fn groups_cover_every_condition() {
        let g = SurveyFeatureGroups::default();
        for c in SurveyCondition::ALL {
            assert!(!g.members(c).is_empty(), "{c:?}");
        }
        let neo = CcsrCategory::parse("NEO070").unwrap();
        assert_eq!(g.conditions_for(&neo).collect::<Vec<_>>(), [SurveyCondition::Cancer]);
        let prg = CcsrCategory::parse("PRG030").unwrap();
        assert_eq!(g.conditions_for(&prg).collect::<Vec<_>>(), [SurveyCondition::Pregnancy]);
        let cir022 = CcsrCategory::parse("CIR022").unwrap();
        assert_eq!(g.conditions_for(&cir022).collect::<Vec<_>>(), [SurveyCondition::Neurocognitive]);
    }

    #[test]
    fn empty_history() {
        let v = extract(&timeline(Gender::Male, &[]));
        assert_eq!(v.get("age"), Some(70.0));
        assert_eq!(v.get("gender_male"), Some(1.0));
        assert!(v.values()[2..].iter().all(|&x| x == 0.0));
        assert_eq!(v, answers_to_features(&SurveyAnswers::new(70, Gender::Male)));
    }

    #[test]
    fn asthma_claim_sets_indicator_and_interaction() {
        let v = extract(&timeline(Gender::Female, &[("c1", "2016-05-01", ClaimType::Office, &["J45.909"])]));
        assert_eq!(v.get("asthma"), Some(1.0));
        assert_eq!(v.get("asthma_x_age"), Some(70.0));
        assert_eq!(v.get("gender_male"), Some(0.0));
        let from_answers = answers_to_features(&SurveyAnswers::new(40, Gender::Female).with(SurveyCondition::Asthma));
        assert_eq!(from_answers.get("asthma"), Some(1.0));
        assert_eq!(from_answers.get("asthma_x_age"), Some(40.0));
    }

    #[test]
    fn lookback_window_edges() {
        let v = extract(&timeline(
            Gender::Female,
            &[
                ("old", "2015-08-30", ClaimType::Office, &["J45.909"]),
                ("edge", "2015-09-30", ClaimType::Office, &["I10"]),
                ("today", "2016-09-30", ClaimType::Office, &["E66.9"]),
                ("future", "2016-10-01", ClaimType::Office, &["N18.3"]),
            ],
        ));
        assert_eq!(v.get("asthma"), Some(0.0));
        assert_eq!(v.get("hypertension"), Some(1.0));
        assert_eq!(v.get("obesity"), Some(1.0));
        assert_eq!(v.get("chronic_kidney_disease"), Some(0.0));
    }

    #[test]
    fn utilization_counts_distinct_claims() {
        let v = extract(&timeline(
            Gender::Male,
            &[
                ("a1", "2016-01-05", ClaimType::Inpatient, &["S72.001A"]),
                ("a1", "2016-01-06", ClaimType::Inpatient, &["S72.001A"]),
                ("a2", "2016-03-05", ClaimType::Inpatient, &[]),
                ("o1", "2016-03-07", ClaimType::Observation, &[]),
                ("e1", "2016-04-05", ClaimType::Er, &[]),
            ],
        ));
        assert_eq!(v.get("prior_admissions"), Some(2.0));
        assert_eq!(v.get("prior_er_visits"), Some(1.0));
    }

    #[test]
    fn multi_group_code_sets_both() {
        // I12.0 maps to CIR008 (hypertension) and GEN003 (CKD)
        let v = extract(&timeline(Gender::Male, &[("c", "2016-06-01", ClaimType::Office, &["I12.0"])]));
        assert_eq!(v.get("hypertension"), Some(1.0));
        assert_eq!(v.get("chronic_kidney_disease"), Some(1.0));
        assert_eq!(v.get("congestive_heart_failure"), Some(0.0));
    }

    #[test]
    fn answers_json_round_trip() {
        let a = SurveyAnswers::new(55, Gender::Female).with(SurveyCondition::Pregnancy);
        let json = a.to_json();
        assert_eq!(json["pregnancy"], json!(true));
        assert_eq!(SurveyAnswers::from_json(&json).unwrap(), a);
    }

    #[test]
    fn answers_json_errors_are_field_level() {
        let errs = SurveyAnswers::from_json(&json!({"age_years": 17, "gender": "male"})).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "age_years");
        assert!(errs[0].message.contains("18"));

        let errs = SurveyAnswers::from_json(&json!({
            "gender": "robot",
            "asthma": "yes",
            "prior_admissions": -1,
            "favourite_colour": "blue"
        }))
        .unwrap_err();
        let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["age_years", "gender", "prior_admissions", "asthma", "favourite_colour"]);

        assert!(SurveyAnswers::from_json(&json!([1, 2])).is_err());
        assert!(SurveyAnswers::from_json(&json!({"age_years": 70.5, "gender": "male"})).is_err());
    }
}
