//! Calendar helpers shared by the cohort and feature windows.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

/// A calendar month, the unit of insurance eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since year 0; convenient for differences.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ordinal: i64) -> Self {
        Self {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn next(self) -> Self {
        self.offset(1)
    }

    pub fn prev(self) -> Self {
        self.offset(-1)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid year-month")
    }

    pub fn last_day(self) -> NaiveDate {
        self.next().first_day().pred_opt().expect("date in range")
    }

    /// Inclusive iterator over `start..=end`.
    pub fn range_inclusive(start: YearMonth, end: YearMonth) -> impl Iterator<Item = YearMonth> {
        let n = start.months_until(end).max(-1) + 1;
        (0..n).map(move |i| start.offset(i))
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadYearMonth(pub String);

impl fmt::Display for BadYearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid year-month {:?} (expected YYYY-MM)", self.0)
    }
}

impl std::error::Error for BadYearMonth {}

impl FromStr for YearMonth {
    type Err = BadYearMonth;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BadYearMonth(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).ok_or_else(bad)
    }
}

impl TryFrom<String> for YearMonth {
    type Error = BadYearMonth;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> Self {
        m.to_string()
    }
}

/// Parses a strict ISO-8601 calendar date (`YYYY-MM-DD`).
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if s.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

/// `date + months` calendar months, clamping the day to the end of the target month.
pub fn add_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_add_months(Months::new(months))
        .expect("date arithmetic within supported range")
}

pub fn sub_months(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_sub_months(Months::new(months))
        .expect("date arithmetic within supported range")
}

/// Completed years of age on `on`.
pub fn age_in_years(birth: NaiveDate, on: NaiveDate) -> i32 {
    let mut age = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        age -= 1;
    }
    age
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn year_month_arithmetic() {
        let ym = YearMonth::new(2016, 11).unwrap();
        assert_eq!(ym.offset(3).to_string(), "2017-02");
        assert_eq!(ym.offset(-11).to_string(), "2015-12");
        assert_eq!(ym.months_until(YearMonth::new(2017, 2).unwrap()), 3);
        assert_eq!(ym.last_day(), d("2016-11-30"));
        assert_eq!(YearMonth::new(2016, 2).unwrap().last_day(), d("2016-02-29"));
        assert_eq!(YearMonth::range_inclusive(ym, ym.offset(2)).count(), 3);
        assert_eq!(YearMonth::range_inclusive(ym, ym.prev()).count(), 0);
    }

    #[test]
    fn year_month_serializes_as_text() {
        let ym = YearMonth::new(2016, 9).unwrap();
        assert_eq!(serde_json::to_string(&ym).unwrap(), "\"2016-09\"");
        assert_eq!(serde_json::from_str::<YearMonth>("\"2016-09\"").unwrap(), ym);
        assert!(serde_json::from_str::<YearMonth>("\"2016-13\"").is_err());
    }

    #[test]
    fn parses_year_month() {
        assert_eq!("2016-07".parse::<YearMonth>().unwrap(), YearMonth::new(2016, 7).unwrap());
        assert!("2016-13".parse::<YearMonth>().is_err());
        assert!("2016-7".parse::<YearMonth>().is_err());
        assert!("201607".parse::<YearMonth>().is_err());
    }

    #[test]
    fn strict_dates() {
        assert!(parse_date("2016-13-01").is_none());
        assert!(parse_date("2016-02-30").is_none());
        assert!(parse_date("2016-2-3").is_none());
        assert_eq!(parse_date(" 2016-07-01 "), Some(d("2016-07-01")));
    }

    #[test]
    fn month_arithmetic_clamps() {
        assert_eq!(add_months(d("2016-09-30"), 3), d("2016-12-30"));
        assert_eq!(add_months(d("2016-01-31"), 1), d("2016-02-29"));
        assert_eq!(sub_months(d("2016-09-30"), 15), d("2015-06-30"));
    }

    #[test]
    fn completed_years() {
        assert_eq!(age_in_years(d("1950-10-01"), d("2016-09-30")), 65);
        assert_eq!(age_in_years(d("1950-09-30"), d("2016-09-30")), 66);
        assert_eq!(age_in_years(d("2000-02-29"), d("2018-02-28")), 17);
    }
}
