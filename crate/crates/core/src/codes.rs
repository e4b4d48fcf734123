//! ICD-10-CM diagnosis codes and the CCSR category catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("malformed diagnosis code {0:?}")]
    MalformedCode(String),
    #[error("malformed CCSR category {0:?}")]
    MalformedCategory(String),
    #[error("malformed catalog row at line {0}")]
    MalformedCatalogRow(u64),
    #[error("catalog contains no rows")]
    EmptyCatalog,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A normalized ICD-10-CM code: uppercase, no dot, 3-7 alphanumerics.
///
/// The second character must be a digit, which rejects the purely numeric
/// ICD-9 codes outright.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DiagnosisCode(String);

impl DiagnosisCode {
    pub fn parse(raw: &str) -> Result<Self, CodeError> {
        normalize_code(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DiagnosisCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for DiagnosisCode {
    type Error = CodeError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        normalize_code(&value)
    }
}

impl From<DiagnosisCode> for String {
    fn from(code: DiagnosisCode) -> Self {
        code.0
    }
}

/// Uppercases, strips surrounding whitespace and dots, then validates shape.
pub fn normalize_code(raw: &str) -> Result<DiagnosisCode, CodeError> {
    let cleaned: String = raw
        .trim()
        .chars()
        .filter(|&c| c != '.')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    let bytes = cleaned.as_bytes();
    let well_formed = (3..=7).contains(&bytes.len())
        && bytes.iter().all(u8::is_ascii_alphanumeric)
        && bytes[0].is_ascii_alphabetic()
        && bytes[1].is_ascii_digit();
    if well_formed {
        Ok(DiagnosisCode(cleaned))
    } else {
        Err(CodeError::MalformedCode(raw.to_string()))
    }
}

/// A CCSR category id such as `RSP002`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CcsrCategory(String);

impl CcsrCategory {
    pub fn parse(raw: &str) -> Result<Self, CodeError> {
        let id = raw.trim().to_ascii_uppercase();
        let b = id.as_bytes();
        if b.len() == 6 && b[..3].iter().all(u8::is_ascii_uppercase) && b[3..].iter().all(u8::is_ascii_digit) {
            Ok(CcsrCategory(id))
        } else {
            Err(CodeError::MalformedCategory(raw.to_string()))
        }
    }

    pub fn id(&self) -> &str {
        &self.0
    }

    /// Three-letter body system prefix, e.g. `RSP`.
    pub fn body_system(&self) -> &str {
        &self.0[..3]
    }
}

impl fmt::Display for CcsrCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CcsrCategory {
    type Error = CodeError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        CcsrCategory::parse(&value)
    }
}

impl From<CcsrCategory> for String {
    fn from(cat: CcsrCategory) -> Self {
        cat.0
    }
}

const BUNDLED_CATALOG: &str = include_str!("../data/ccsr_fixture.csv");
pub const BUNDLED_CATALOG_VERSION: &str = "ccsr-fixture-2020.2";

/// Immutable ICD-10-CM to CCSR mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CcsrCatalog {
    entries: BTreeMap<DiagnosisCode, BTreeSet<CcsrCategory>>,
    version: String,
}

static EMPTY: BTreeSet<CcsrCategory> = BTreeSet::new();

impl CcsrCatalog {
    /// Reads a `code,ccsr_category` CSV. Codes may carry dots; duplicate pairs collapse.
    pub fn from_reader<R: Read>(reader: R, version: impl Into<String>) -> Result<Self, CodeError> {
        let mut rdr = crate::ingest::csv_builder().has_headers(false).from_reader(reader);
        let mut records = rdr.records();

        match records.next() {
            None => return Err(CodeError::EmptyCatalog),
            Some(Err(_)) => return Err(CodeError::MalformedCatalogRow(1)),
            Some(Ok(header)) => {
                let cols: Vec<&str> = header.iter().collect();
                if cols != ["code", "ccsr_category"] {
                    return Err(CodeError::MalformedCatalogRow(1));
                }
            }
        }

        let mut entries: BTreeMap<DiagnosisCode, BTreeSet<CcsrCategory>> = BTreeMap::new();
        for record in records {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    return Err(CodeError::MalformedCatalogRow(line));
                }
            };
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            if crate::ingest::is_blank(&record) {
                continue;
            }
            if record.len() != 2 {
                return Err(CodeError::MalformedCatalogRow(line));
            }
            let code = normalize_code(&record[0]).map_err(|_| CodeError::MalformedCatalogRow(line))?;
            let cat = CcsrCategory::parse(&record[1]).map_err(|_| CodeError::MalformedCatalogRow(line))?;
            entries.entry(code).or_default().insert(cat);
        }

        if entries.is_empty() {
            return Err(CodeError::EmptyCatalog);
        }
        Ok(Self {
            entries,
            version: version.into(),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CodeError> {
        let path = path.as_ref();
        let version = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_reader(std::fs::File::open(path)?, version)
    }

    /// The small fixture catalog shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_CATALOG.as_bytes(), BUNDLED_CATALOG_VERSION)
            .expect("bundled catalog is well-formed")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Categories for `code`; empty when the code is unmapped.
    pub fn categories_for(&self, code: &DiagnosisCode) -> &BTreeSet<CcsrCategory> {
        self.entries.get(code).unwrap_or(&EMPTY)
    }

    /// Every category referenced by the catalog, sorted.
    pub fn categories(&self) -> BTreeSet<&CcsrCategory> {
        self.entries.values().flatten().collect()
    }

    pub fn codes(&self) -> impl Iterator<Item = (&DiagnosisCode, &BTreeSet<CcsrCategory>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Diagnoses that make an inpatient or observation claim a proxy outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyCodeSet {
    pub literal_codes: BTreeSet<DiagnosisCode>,
    pub categories: BTreeSet<CcsrCategory>,
}

impl Default for ProxyCodeSet {
    /// ARDS (J80) plus pneumonia, influenza, acute bronchitis and other
    /// upper respiratory infections.
    fn default() -> Self {
        let literal_codes = [DiagnosisCode("J80".into())].into_iter().collect();
        let categories = ["RSP002", "RSP003", "RSP005", "RSP006"]
            .into_iter()
            .map(|c| CcsrCategory(c.into()))
            .collect();
        Self {
            literal_codes,
            categories,
        }
    }
}

pub fn is_proxy_diagnosis(catalog: &CcsrCatalog, proxy: &ProxyCodeSet, code: &DiagnosisCode) -> bool {
    proxy.literal_codes.contains(code)
        || catalog
            .categories_for(code)
            .iter()
            .any(|cat| proxy.categories.contains(cat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(s: &str) -> DiagnosisCode {
        normalize_code(s).unwrap()
    }

    fn cat(s: &str) -> CcsrCategory {
        CcsrCategory::parse(s).unwrap()
    }

    #[test]
    fn normalizes_codes() {
        assert_eq!(code(" j80.1 ").as_str(), "J801");
        assert_eq!(code("J80").as_str(), "J80");
        assert_eq!(code("J09.X2").as_str(), "J09X2");
        assert!(matches!(normalize_code("80J"), Err(CodeError::MalformedCode(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        for raw in ["", "J8", "J80123456", "J8-0", "486", "4280", "JJ80", "J 80", "É80"] {
            assert!(normalize_code(raw).is_err(), "{raw:?} accepted");
        }
    }

    #[test]
    fn category_shape() {
        let c = cat("rsp002");
        assert_eq!(c.id(), "RSP002");
        assert_eq!(c.body_system(), "RSP");
        assert!(CcsrCategory::parse("RSP02").is_err());
        assert!(CcsrCategory::parse("R5P002").is_err());
        assert!(CcsrCategory::parse("RSP00A").is_err());
    }

    #[test]
    fn bundled_fixture_lookups() {
        let catalog = CcsrCatalog::bundled();
        assert_eq!(catalog.version(), BUNDLED_CATALOG_VERSION);
        let pneumonia: Vec<_> = catalog.categories_for(&code("J189")).iter().cloned().collect();
        assert_eq!(pneumonia, vec![cat("RSP002")]);
        let crisis: Vec<_> = catalog.categories_for(&code("I16.9")).iter().cloned().collect();
        assert_eq!(crisis, vec![cat("CIR007"), cat("CIR008")]);
        assert!(catalog.categories_for(&code("Z999")).is_empty());
    }

    #[test]
    fn multi_category_rows_merge() {
        let csv = "code,ccsr_category\nE11.9,END002\nE11.9,END005\nE11.9,END002\n";
        let catalog = CcsrCatalog::from_reader(csv.as_bytes(), "t").unwrap();
        assert_eq!(catalog.len(), 1);
        assert_eq!(catalog.categories_for(&code("E119")).len(), 2);
    }

    #[test]
    fn catalog_errors() {
        assert!(matches!(CcsrCatalog::from_reader("".as_bytes(), "t"), Err(CodeError::EmptyCatalog)));
        assert!(matches!(
            CcsrCatalog::from_reader("code,ccsr_category\n".as_bytes(), "t"),
            Err(CodeError::EmptyCatalog)
        ));
        let bad = "code,ccsr_category\nJ18.9,RSP002\n486,RSP002\n";
        assert!(matches!(
            CcsrCatalog::from_reader(bad.as_bytes(), "t"),
            Err(CodeError::MalformedCatalogRow(3))
        ));
        let bad_cat = "code,ccsr_category\r\nJ18.9,RSP2\r\n";
        assert!(matches!(
            CcsrCatalog::from_reader(bad_cat.as_bytes(), "t"),
            Err(CodeError::MalformedCatalogRow(2))
        ));
        let extra = "code,ccsr_category\nJ18.9,RSP002,x\n";
        assert!(matches!(
            CcsrCatalog::from_reader(extra.as_bytes(), "t"),
            Err(CodeError::MalformedCatalogRow(2))
        ));
    }

    #[test]
    fn proxy_membership() {
        let catalog = CcsrCatalog::bundled();
        let proxy = ProxyCodeSet::default();
        assert!(is_proxy_diagnosis(&catalog, &proxy, &code("J80")));
        assert!(is_proxy_diagnosis(&catalog, &proxy, &code("J18.9")));
        assert!(is_proxy_diagnosis(&catalog, &proxy, &code("J10.1")));
        assert!(!is_proxy_diagnosis(&catalog, &proxy, &code("E11.9")));
        assert!(!is_proxy_diagnosis(&catalog, &proxy, &code("J45.909")));

        let empty = CcsrCatalog {
            entries: BTreeMap::new(),
            version: String::new(),
        };
        assert!(is_proxy_diagnosis(&empty, &proxy, &code("J80")));
        assert!(!is_proxy_diagnosis(&empty, &proxy, &code("J189")));
    }

    #[test]
    fn proxy_defaults_match_outcome_definition() {
        let proxy = ProxyCodeSet::default();
        let literal: Vec<_> = proxy.literal_codes.iter().map(|c| c.as_str()).collect();
        assert_eq!(literal, ["J80"]);
        let cats: Vec<_> = proxy.categories.iter().map(|c| c.id()).collect();
        assert_eq!(cats, ["RSP002", "RSP003", "RSP005", "RSP006"]);
    }

    #[test]
    fn proxy_set_deserializes_and_validates() {
        let json = r#"{"literal_codes":["j80"],"categories":["RSP002"]}"#;
        let p: ProxyCodeSet = serde_json::from_str(json).unwrap();
        assert!(p.literal_codes.contains(&code("J80")));
        assert!(serde_json::from_str::<ProxyCodeSet>(r#"{"literal_codes":["80"],"categories":[]}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(raw in "[ a-zA-Z0-9.]{0,10}") {
                if let Ok(once) = normalize_code(&raw) {
                    let twice = normalize_code(once.as_str()).unwrap();
                    prop_assert_eq!(&once, &twice);
                    prop_assert!(!once.as_str().contains('.'));
                    prop_assert!(!once.as_str().contains(char::is_whitespace));
                }
            }

            #[test]
            fn catalog_load_is_order_independent(seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut lines: Vec<&str> = BUNDLED_CATALOG.lines().skip(1).collect();
                lines.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let shuffled = format!("code,ccsr_category\n{}\n", lines.join("\n"));
                let a = CcsrCatalog::from_reader(shuffled.as_bytes(), BUNDLED_CATALOG_VERSION).unwrap();
                prop_assert_eq!(a, CcsrCatalog::bundled());
            }
        }
    }
}
