//! Monthly and quarterly calendar arithmetic.
//!
//! Both types are ordinal counters so that differences and ranges are plain
//! integer arithmetic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month, stored as `year * 12 + (month - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Month(i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Parse(format!("month {month} out of range")));
        }
        Ok(Month(year * 12 + month as i32 - 1))
    }

    pub const fn from_ordinal(ordinal: i32) -> Self {
        Month(ordinal)
    }

    pub const fn ordinal(self) -> i32 {
        self.0
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// Month of year, 1..=12.
    pub fn month(self) -> u32 {
        self.0.rem_euclid(12) as u32 + 1
    }

    pub fn quarter(self) -> Quarter {
        Quarter::from_ordinal(self.0.div_euclid(3))
    }

    /// Position inside the quarter: 0, 1 or 2.
    pub fn month_in_quarter(self) -> usize {
        self.0.rem_euclid(3) as usize
    }

    pub fn is_quarter_end(self) -> bool {
        self.month_in_quarter() == 2
    }

    pub fn add(self, months: i32) -> Self {
        Month(self.0 + months)
    }

    /// Number of months from `other` to `self`.
    pub fn diff(self, other: Month) -> i32 {
        self.0 - other.0
    }

    /// Inclusive range of months.
    pub fn range_inclusive(start: Month, end: Month) -> impl Iterator<Item = Month> {
        (start.0..=end.0).map(Month)
    }

    /// Parses `YYYY-MM` or `YYYY-MM-DD` (day ignored).
    pub fn parse_iso(s: &str) -> Result<Self> {
        let mut parts = s.trim().split('-');
        let year = parts
            .next()
            .and_then(|y| y.parse::<i32>().ok())
            .ok_or_else(|| Error::Parse(format!("bad date {s:?}")))?;
        let month = parts
            .next()
            .and_then(|m| m.parse::<u32>().ok())
            .ok_or_else(|| Error::Parse(format!("bad date {s:?}")))?;
        Month::new(year, month)
    }

    /// ISO-8601 first-of-month date, e.g. `1947-01-01`.
    pub fn to_iso_date(self) -> String {
        format!("{:04}-{:02}-01", self.year(), self.month())
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for Month {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Month::parse_iso(s)
    }
}

impl TryFrom<String> for Month {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Month::parse_iso(&s)
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}

/// A calendar quarter, stored as `year * 4 + (q - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Quarter(i32);

impl Quarter {
    pub fn new(year: i32, q: u32) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::Parse(format!("quarter {q} out of range")));
        }
        Ok(Quarter(year * 4 + q as i32 - 1))
    }

    pub const fn from_ordinal(ordinal: i32) -> Self {
        Quarter(ordinal)
    }

    pub const fn ordinal(self) -> i32 {
        self.0
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(4)
    }

    /// Quarter of year, 1..=4.
    pub fn q(self) -> u32 {
        self.0.rem_euclid(4) as u32 + 1
    }

    pub fn first_month(self) -> Month {
        Month::from_ordinal(self.0 * 3)
    }

    pub fn last_month(self) -> Month {
        Month::from_ordinal(self.0 * 3 + 2)
    }

    /// The three months of the quarter in order.
    pub fn months(self) -> [Month; 3] {
        let m = self.first_month();
        [m, m.add(1), m.add(2)]
    }

    pub fn add(self, quarters: i32) -> Self {
        Quarter(self.0 + quarters)
    }

    pub fn diff(self, other: Quarter) -> i32 {
        self.0 - other.0
    }

    pub fn range_inclusive(start: Quarter, end: Quarter) -> impl Iterator<Item = Quarter> {
        (start.0..=end.0).map(Quarter)
    }

    /// Parses `1972Q1` (case-insensitive, optional `-` or space separator).
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let (y, q) = t
            .split_once('Q')
            .ok_or_else(|| Error::Parse(format!("bad quarter {s:?}")))?;
        let y = y.trim_end_matches(['-', ' ']);
        let year = y
            .parse::<i32>()
            .map_err(|_| Error::Parse(format!("bad quarter {s:?}")))?;
        let q = q
            .parse::<u32>()
            .map_err(|_| Error::Parse(format!("bad quarter {s:?}")))?;
        Quarter::new(year, q)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year(), self.q())
    }
}

impl FromStr for Quarter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Quarter::parse(s)
    }
}

impl TryFrom<String> for Quarter {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Quarter::parse(&s)
    }
}

impl From<Quarter> for String {
    fn from(q: Quarter) -> String {
        q.to_string()
    }
}

/// An inclusive range of quarters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterRange {
    pub start: Quarter,
    pub end: Quarter,
}

impl QuarterRange {
    pub fn new(start: Quarter, end: Quarter) -> Self {
        QuarterRange { start, end }
    }

    pub fn contains(&self, q: Quarter) -> bool {
        self.start <= q && q <= self.end
    }

    pub fn contains_month(&self, m: Month) -> bool {
        self.contains(m.quarter())
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.end.diff(self.start) + 1) as usize
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Quarter> {
        Quarter::range_inclusive(self.start, self.end)
    }
}
