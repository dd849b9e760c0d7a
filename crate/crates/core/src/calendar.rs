//! Calendar dates, futures reference periods and meeting schedules.
//!
//! Dates are stored as a signed day count from 1970-01-01 so that day
//! arithmetic is plain integer arithmetic. Conversion to and from
//! year/month/day goes through `chrono`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `NaiveDate::num_days_from_ce` of 1970-01-01.
const EPOCH_FROM_CE: i32 = 719_163;

/// Business-day lookback used by [`prior_business_day`].
pub const BUSINESS_DAY_LOOKBACK: i32 = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalendarError {
    #[error("invalid calendar date {year:04}-{month:02}-{day:02}")]
    InvalidDate { year: i32, month: u32, day: u32 },
    #[error("cannot parse date '{0}'")]
    Parse(String),
    #[error("no business day within {BUSINESS_DAY_LOOKBACK} days before {0}")]
    NoBusinessDay(Date),
    #[error("schedule must be non-empty and strictly increasing")]
    InvalidSchedule,
}

/// A calendar date as a day offset from 1970-01-01.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Date(i32);

impl Date {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self, CalendarError> {
        NaiveDate::from_ymd_opt(year, month, day)
            .map(Self::from_naive)
            .ok_or(CalendarError::InvalidDate { year, month, day })
    }

    pub const fn from_offset(days: i32) -> Self {
        Date(days)
    }

    /// Days since 1970-01-01.
    pub const fn offset(self) -> i32 {
        self.0
    }

    fn from_naive(d: NaiveDate) -> Self {
        Date(d.num_days_from_ce() - EPOCH_FROM_CE)
    }

    fn naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0 + EPOCH_FROM_CE)
            .expect("date offset within chrono range")
    }

    pub fn year(self) -> i32 {
        self.naive().year()
    }

    pub fn month(self) -> u32 {
        self.naive().month()
    }

    pub fn day(self) -> u32 {
        self.naive().day()
    }

    pub fn weekday(self) -> Weekday {
        self.naive().weekday()
    }

    pub fn is_weekend(self) -> bool {
        matches!(self.weekday(), Weekday::Sat | Weekday::Sun)
    }

    pub fn add_days(self, days: i32) -> Self {
        Date(self.0 + days)
    }

    /// Signed number of days from `self` to `other`.
    pub fn days_until(self, other: Date) -> i32 {
        other.0 - self.0
    }

    /// Last calendar day of this date's month.
    pub fn month_end(self) -> Self {
        let (y, m) = (self.year(), self.month());
        Date::from_ymd(y, m, days_in_month(y, m)).expect("valid month end")
    }

    /// Month index `12 * year + (month - 1)`, convenient for month arithmetic.
    pub fn month_index(self) -> i32 {
        self.year() * 12 + self.month() as i32 - 1
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.naive().format("%Y-%m-%d"))
    }
}

impl FromStr for Date {
    type Err = CalendarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .map(Date::from_naive)
            .map_err(|_| CalendarError::Parse(s.to_string()))
    }
}

impl From<Date> for String {
    fn from(d: Date) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Date {
    type Error = CalendarError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    };
    let first_next = NaiveDate::from_ymd_opt(ny, nm, 1).expect("valid month");
    first_next.pred_opt().expect("previous day exists").day()
}

fn month_from_index(index: i32) -> (i32, u32) {
    (index.div_euclid(12), index.rem_euclid(12) as u32 + 1)
}

/// The unique Wednesday with day-of-month in 15..=21.
pub fn third_wednesday(year: i32, month: u32) -> Result<Date, CalendarError> {
    let first = Date::from_ymd(year, month, 1)?;
    let to_wed =
        (Weekday::Wed.num_days_from_monday() + 7 - first.weekday().num_days_from_monday()) % 7;
    Ok(first.add_days(14 + to_wed as i32))
}

/// Reference period of a three-month contract delivering in the given month:
/// from the third Wednesday three months before to the third Wednesday of the
/// delivery month.
pub fn three_month_reference_period(
    delivery_year: i32,
    delivery_month: u32,
) -> Result<(Date, Date), CalendarError> {
    let end = third_wednesday(delivery_year, delivery_month)?;
    let (sy, sm) = month_from_index(delivery_year * 12 + delivery_month as i32 - 1 - 3);
    Ok((third_wednesday(sy, sm)?, end))
}

/// Reference period of a one-month contract: first and last calendar day of
/// the month, both inclusive. The last fixing accrues over the last day, so
/// the half-open accrual end is `last + 1`.
pub fn one_month_reference_period(year: i32, month: u32) -> Result<(Date, Date), CalendarError> {
    let first = Date::from_ymd(year, month, 1)?;
    Ok((first, first.month_end()))
}

/// Latest date `<= d` that is neither a weekend nor a listed holiday.
pub fn prior_business_day(d: Date, holidays: &HashSet<Date>) -> Result<Date, CalendarError> {
    (0..=BUSINESS_DAY_LOOKBACK)
        .map(|back| d.add_days(-back))
        .find(|c| !c.is_weekend() && !holidays.contains(c))
        .ok_or(CalendarError::NoBusinessDay(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Fomc,
    Monthly,
    Daily,
}

/// Strictly increasing, non-empty list of dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    dates: Vec<Date>,
    kind: ScheduleKind,
}

impl Schedule {
    pub fn new(dates: Vec<Date>, kind: ScheduleKind) -> Result<Self, CalendarError> {
        if dates.is_empty() || dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CalendarError::InvalidSchedule);
        }
        Ok(Self { dates, kind })
    }

    /// Month-ends strictly after `start`, `months` of them.
    pub fn monthly(start: Date, months: usize) -> Result<Self, CalendarError> {
        let first = if start == start.month_end() {
            start.month_index() + 1
        } else {
            start.month_index()
        };
        let dates = (0..months as i32)
            .map(|i| {
                let (y, m) = month_from_index(first + i);
                Date::from_ymd(y, m, days_in_month(y, m)).expect("valid month end")
            })
            .collect();
        Self::new(dates, ScheduleKind::Monthly)
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Keep only dates in `(after, until]`.
    pub fn window(&self, after: Date, until: Date) -> Vec<Date> {
        self.dates
            .iter()
            .copied()
            .filter(|d| *d > after && *d <= until)
            .collect()
    }
}

/// Parse a plain-text date list: one ISO-8601 date per line, `#` starts a
/// comment, blank lines ignored.
pub fn parse_date_list(text: &str) -> Result<Vec<Date>, CalendarError> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::parse)
        .collect()
}
