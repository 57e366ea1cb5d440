//! Monthly calendar arithmetic.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A calendar month. Ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(YearMonth { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    /// 1 = January .. 12 = December.
    pub fn month(self) -> u32 {
        self.month
    }

    /// Zero-based month of year.
    pub fn month0(self) -> usize {
        (self.month - 1) as usize
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(n: i64) -> Self {
        YearMonth {
            year: n.div_euclid(12) as i32,
            month: n.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn add_months(self, k: i64) -> Self {
        Self::from_ordinal(self.ordinal() + k)
    }

    /// Inclusive month range.
    pub fn range(start: YearMonth, end: YearMonth) -> Vec<YearMonth> {
        (start.ordinal()..=end.ordinal())
            .map(Self::from_ordinal)
            .collect()
    }

    /// Days since 1970-01-01 of the first day of the month.
    pub fn to_epoch_days(self) -> i32 {
        let d = NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month");
        (d - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days() as i32
    }

    /// Month containing the given day offset from 1970-01-01.
    pub fn from_epoch_days(days: i32) -> Option<Self> {
        let d = NaiveDate::from_ymd_opt(1970, 1, 1)?
            .checked_add_signed(chrono::Duration::days(days as i64))?;
        YearMonth::new(d.year(), d.month())
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid month `{0}`, expected YYYY-MM or YYYY-MM-DD")]
pub struct ParseMonthError(String);

impl FromStr for YearMonth {
    type Err = ParseMonthError;

    /// Accepts `YYYY-MM` and `YYYY-MM-DD`; the day is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseMonthError(s.to_string());
        let t = s.trim();
        let mut parts = t.split('-');
        let y = parts.next().ok_or_else(err)?;
        let m = parts.next().ok_or_else(err)?;
        if let Some(d) = parts.next() {
            let day: u32 = d.parse().map_err(|_| err())?;
            if !(1..=31).contains(&day) {
                return Err(err());
            }
        }
        if parts.next().is_some() || y.len() != 4 || m.len() != 2 {
            return Err(err());
        }
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        YearMonth::new(year, month).ok_or_else(err)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Meteorological season of a calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Spring,
    Summer,
    Autumn,
    Winter,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Spring, Season::Summer, Season::Autumn, Season::Winter];

    /// Dec–Feb is winter regardless of the year boundary.
    pub fn of(month: YearMonth) -> Season {
        match month.month() {
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            9..=11 => Season::Autumn,
            _ => Season::Winter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
        }
    }
}

/// Checks that `times` is strictly increasing with one-month spacing.
/// Returns the first offending position on failure.
pub fn check_monthly(times: &[YearMonth]) -> Result<(), usize> {
    for (i, w) in times.windows(2).enumerate() {
        if w[1].ordinal() != w[0].ordinal() + 1 {
            return Err(i + 1);
        }
    }
    Ok(())
}
