//! Claims, eligibility and demographics ingestion.
//!
//! Each parser validates the header, then turns every data row into either
//! a record or a [`RowError`] carrying the 1-based file line. Rows are never
//! dropped silently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{normalize_code, DiagnosisCode};
use crate::dates::{parse_date, YearMonth};

pub const CLAIMS_HEADER: [&str; 5] = ["person_id", "claim_id", "from_date", "claim_type", "diagnoses"];
pub const ELIGIBILITY_HEADER: [&str; 3] = ["person_id", "month", "covered"];
pub const DEMOGRAPHICS_HEADER: [&str; 4] = ["person_id", "birth_date", "gender", "death_date"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing or malformed header; expected `{0}`")]
    MissingHeader(String),
    #[error("two demographics rows for person {0}")]
    DuplicateDemographics(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowErrorKind {
    BadDate(String),
    BadClaimType(String),
    MalformedCode(String),
    BadMonth(String),
    BadFlag(String),
    BadGender(String),
    DeathBeforeBirth,
    EmptyField(&'static str),
    FieldCount { expected: usize, found: usize },
    Unreadable(String),
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowErrorKind::BadDate(v) => write!(f, "bad date {v:?}"),
            RowErrorKind::BadClaimType(v) => write!(f, "bad claim type {v:?}"),
            RowErrorKind::MalformedCode(v) => write!(f, "malformed diagnosis code {v:?}"),
            RowErrorKind::BadMonth(v) => write!(f, "bad month {v:?}"),
            RowErrorKind::BadFlag(v) => write!(f, "bad covered flag {v:?} (expected 0 or 1)"),
            RowErrorKind::BadGender(v) => write!(f, "bad gender {v:?} (expected M, F or U)"),
            RowErrorKind::DeathBeforeBirth => f.write_str("death date precedes birth date"),
            RowErrorKind::EmptyField(name) => write!(f, "empty field `{name}`"),
            RowErrorKind::FieldCount { expected, found } => {
                write!(f, "expected {expected} fields, found {found}")
            }
            RowErrorKind::Unreadable(msg) => write!(f, "unreadable row: {msg}"),
        }
    }
}

/// A rejected data row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

/// Result of parsing one file: the good rows and the rejected ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RowError>,
}

impl<T> Parsed<T> {
    pub fn rows(&self) -> usize {
        self.records.len() + self.errors.len()
    }

    /// Fraction of data rows rejected; 0 for an empty file.
    pub fn error_rate(&self) -> f64 {
        match self.rows() {
            0 => 0.0,
            n => self.errors.len() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimType {
    Inpatient,
    Observation,
    Er,
    Office,
    Other,
}

impl ClaimType {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimType::Inpatient => "inpatient",
            ClaimType::Observation => "observation",
            ClaimType::Er => "er",
            ClaimType::Office => "office",
            ClaimType::Other => "other",
        }
    }

    /// Inpatient visits and observation stays.
    pub fn is_facility_stay(self) -> bool {
        matches!(self, ClaimType::Inpatient | ClaimType::Observation)
    }
}

impl FromStr for ClaimType {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inpatient" => Ok(ClaimType::Inpatient),
            "observation" => Ok(ClaimType::Observation),
            "er" => Ok(ClaimType::Er),
            "office" => Ok(ClaimType::Office),
            "other" => Ok(ClaimType::Other),
            _ => Err(()),
        }
    }
}

/// One medical claim. `diagnoses[0]` is the primary diagnosis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClaimRecord {
    pub person_id: String,
    pub claim_id: String,
    pub from_date: NaiveDate,
    pub claim_type: ClaimType,
    pub diagnoses: Vec<DiagnosisCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn code(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
            Gender::Unknown => "U",
        }
    }
}

impl FromStr for Gender {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" => Ok(Gender::Male),
            "F" | "f" => Ok(Gender::Female),
            "U" | "u" => Ok(Gender::Unknown),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EligibilitySpan {
    pub person_id: String,
    pub month: YearMonth,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Demographics {
    pub person_id: String,
    pub birth_date: NaiveDate,
    pub gender: Gender,
    pub death_date: Option<NaiveDate>,
}

impl Demographics {
    pub fn is_alive_on(&self, date: NaiveDate) -> bool {
        self.death_date.map_or(true, |death| death > date)
    }
}

/// Shared reader settings. Splitting records on `\n` alone (the trailing `\r`
/// of CRLF input is trimmed away) keeps reported line numbers exact; the
/// default CRLF terminator miscounts them.
pub(crate) fn csv_builder() -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.flexible(true).trim(csv::Trim::All).terminator(csv::Terminator::Any(b'\n'));
    b
}

/// A record produced by an empty line.
pub(crate) fn is_blank(record: &csv::StringRecord) -> bool {
    record.len() == 1 && record[0].is_empty()
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv_builder().has_headers(false).from_reader(reader)
}

/// Drives a header check and per-row conversion over a CSV source.
fn parse_rows<R, T, F>(reader: R, header: &[&str], optional_tail: usize, mut convert: F) -> Result<Parsed<T>, IngestError>
where
    R: Read,
    F: FnMut(&csv::StringRecord) -> Result<T, RowErrorKind>,
{
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    let expected = header.join(",");
    match records.next() {
        Some(Ok(h)) if h.iter().eq(header.iter().copied()) => {}
        Some(Ok(h)) if optional_tail > 0 && h.iter().eq(header[..header.len() - optional_tail].iter().copied()) => {}
        Some(Err(e)) if e.is_io_error() => return Err(e.into()),
        _ => return Err(IngestError::MissingHeader(expected)),
    }

    let min_fields = header.len() - optional_tail;
    let mut out = Parsed {
        records: Vec::new(),
        errors: Vec::new(),
    };
    for row in records {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                if e.is_io_error() {
                    return Err(e.into());
                }
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                out.errors.push(RowError {
                    line,
                    kind: RowErrorKind::Unreadable(e.to_string()),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if is_blank(&row) {
            continue;
        }
        if row.len() < min_fields || row.len() > header.len() {
            out.errors.push(RowError {
                line,
                kind: RowErrorKind::FieldCount {
                    expected: header.len(),
                    found: row.len(),
                },
            });
            continue;
        }
        match convert(&row) {
            Ok(rec) => out.records.push(rec),
            Err(kind) => out.errors.push(RowError { line, kind }),
        }
    }
    Ok(out)
}

fn person_id(field: &str) -> Result<String, RowErrorKind> {
    if field.is_empty() {
        Err(RowErrorKind::EmptyField("person_id"))
    } else {
        Ok(field.to_string())
    }
}

fn date_field(field: &str) -> Result<NaiveDate, RowErrorKind> {
    parse_date(field).ok_or_else(|| RowErrorKind::BadDate(field.to_string()))
}

/// Parses `person_id,claim_id,from_date,claim_type,diagnoses` with `|`-separated codes.
pub fn parse_claims<R: Read>(reader: R) -> Result<Parsed<ClaimRecord>, IngestError> {
    parse_rows(reader, &CLAIMS_HEADER, 0, |row| {
        let person_id = person_id(&row[0])?;
        if row[1].is_empty() {
            return Err(RowErrorKind::EmptyField("claim_id"));
        }
        let from_date = date_field(&row[2])?;
        let claim_type = row[3]
            .parse::<ClaimType>()
            .map_err(|_| RowErrorKind::BadClaimType(row[3].to_string()))?;
        let diagnoses = row[4]
            .split('|')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(|c| normalize_code(c).map_err(|_| RowErrorKind::MalformedCode(c.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ClaimRecord {
            person_id,
            claim_id: row[1].to_string(),
            from_date,
            claim_type,
            diagnoses,
        })
    })
}

/// Parses `person_id,month,covered` with `month` as `YYYY-MM` and `covered` as 0/1.
pub fn parse_eligibility<R: Read>(reader: R) -> Result<Parsed<EligibilitySpan>, IngestError> {
    parse_rows(reader, &ELIGIBILITY_HEADER, 0, |row| {
        let person_id = person_id(&row[0])?;
        let month = row[1]
            .parse::<YearMonth>()
            .map_err(|_| RowErrorKind::BadMonth(row[1].to_string()))?;
        let covered = match &row[2] {
            "1" => true,
            "0" => false,
            other => return Err(RowErrorKind::BadFlag(other.to_string())),
        };
        Ok(EligibilitySpan {
            person_id,
            month,
            covered,
        })
    })
}

/// Parses `person_id,birth_date,gender,death_date`; the death column may be empty or absent.
pub fn parse_demographics<R: Read>(reader: R) -> Result<Parsed<Demographics>, IngestError> {
    parse_rows(reader, &DEMOGRAPHICS_HEADER, 1, |row| {
        let person_id = person_id(&row[0])?;
        let birth_date = date_field(&row[1])?;
        let gender = row[2]
            .parse::<Gender>()
            .map_err(|_| RowErrorKind::BadGender(row[2].to_string()))?;
        let death_date = match row.get(3) {
            None | Some("") => None,
            Some(d) => Some(date_field(d)?),
        };
        if death_date.is_some_and(|d| d < birth_date) {
            return Err(RowErrorKind::DeathBeforeBirth);
        }
        Ok(Demographics {
            person_id,
            birth_date,
            gender,
            death_date,
        })
    })
}

pub fn write_claims<W: Write>(writer: W, claims: &[ClaimRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CLAIMS_HEADER)?;
    for c in claims {
        let dx = c.diagnoses.iter().map(DiagnosisCode::as_str).collect::<Vec<_>>().join("|");
        let date = c.from_date.to_string();
        w.write_record([c.person_id.as_str(), &c.claim_id, &date, c.claim_type.as_str(), &dx])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eligibility<W: Write>(writer: W, spans: &[EligibilitySpan]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ELIGIBILITY_HEADER)?;
    for s in spans {
        let month = s.month.to_string();
        w.write_record([s.person_id.as_str(), &month, if s.covered { "1" } else { "0" }])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_demographics<W: Write>(writer: W, people: &[Demographics]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(DEMOGRAPHICS_HEADER)?;
    for p in people {
        let birth = p.birth_date.to_string();
        let death = p.death_date.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([p.person_id.as_str(), &birth, p.gender.code(), &death])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything known about one person, ready for labeling and featurization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonTimeline {
    pub person_id: String,
    pub demographics: Demographics,
    /// Covered months, ascending.
    pub eligibility: Vec<YearMonth>,
    /// Claims ascending by `from_date`.
    pub claims: Vec<ClaimRecord>,
}

impl PersonTimeline {
    pub fn new(demographics: Demographics, mut eligibility: Vec<YearMonth>, mut claims: Vec<ClaimRecord>) -> Self {
        eligibility.sort_unstable();
        eligibility.dedup();
        claims.sort_by(|a, b| a.from_date.cmp(&b.from_date).then_with(|| a.cmp(b)));
        Self {
            person_id: demographics.person_id.clone(),
            demographics,
            eligibility,
            claims,
        }
    }

    pub fn is_covered(&self, month: YearMonth) -> bool {
        self.eligibility.binary_search(&month).is_ok()
    }

    /// Claims whose `from_date` falls in `[start, end]`.
    pub fn claims_between(&self, start: NaiveDate, end: NaiveDate) -> &[ClaimRecord] {
        let lo = self.claims.partition_point(|c| c.from_date < start);
        let hi = self.claims.partition_point(|c| c.from_date <= end);
        &self.claims[lo..hi.max(lo)]
    }
}

/// Consecutive covered months ending with the month that contains `as_of`.
pub fn continuous_eligibility_months(timeline: &PersonTimeline, as_of: NaiveDate) -> u32 {
    let mut month = YearMonth::of(as_of);
    let mut count = 0;
    while timeline.is_covered(month) {
        count += 1;
        month = month.prev();
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OrphanSource {
    Claim,
    Eligibility,
}

/// Non-fatal problems found while assembling timelines.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AssemblyWarning {
    /// A claim or eligibility row for a person without demographics.
    OrphanRecord { source: OrphanSource, person_id: String },
    /// Two eligibility rows for the same month disagree; coverage wins.
    ConflictingEligibility { person_id: String, month: YearMonth },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    /// Sorted by person id.
    pub timelines: Vec<PersonTimeline>,
    pub warnings: Vec<AssemblyWarning>,
}

/// Groups parsed records into one timeline per demographics row.
pub fn assemble_timelines(
    claims: Vec<ClaimRecord>,
    eligibility: Vec<EligibilitySpan>,
    demographics: Vec<Demographics>,
) -> Result<Assembly, IngestError> {
    let mut people: BTreeMap<String, (Demographics, BTreeMap<YearMonth, bool>, Vec<ClaimRecord>)> = BTreeMap::new();
    let mut sorted_demo = demographics;
    sorted_demo.sort();
    for demo in sorted_demo {
        if people.contains_key(&demo.person_id) {
            return Err(IngestError::DuplicateDemographics(demo.person_id));
        }
        people.insert(demo.person_id.clone(), (demo, BTreeMap::new(), Vec::new()));
    }

    let mut warnings = BTreeSet::new();
    for span in eligibility {
        match people.get_mut(&span.person_id) {
            Some((_, months, _)) => {
                let prior = months.insert(span.month, span.covered);
                if let Some(prev) = prior {
                    if prev != span.covered {
                        months.insert(span.month, true);
                        warnings.insert(AssemblyWarning::ConflictingEligibility {
                            person_id: span.person_id.clone(),
                            month: span.month,
                        });
                    }
                }
            }
            None => {
                warnings.insert(AssemblyWarning::OrphanRecord {
                    source: OrphanSource::Eligibility,
                    person_id: span.person_id,
                });
            }
        }
    }
    for claim in claims {
        match people.get_mut(&claim.person_id) {
            Some((_, _, list)) => list.push(claim),
            None => {
                warnings.insert(AssemblyWarning::OrphanRecord {
                    source: OrphanSource::Claim,
                    person_id: claim.person_id,
                });
            }
        }
    }

    let timelines = people
        .into_values()
        .map(|(demo, months, claims)| {
            let covered = months.into_iter().filter_map(|(m, c)| c.then_some(m)).collect();
            PersonTimeline::new(demo, covered, claims)
        })
        .collect();
    Ok(Assembly {
        timelines,
        warnings: warnings.into_iter().collect(),
    })
}
