//! The 8-day time axis: 46 periods per calendar year anchored at January 1,
//! with a short final period (5 days, 6 in leap years).

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PERIODS_PER_YEAR: usize = 46;
pub const PERIOD_DAYS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Period {
    pub year: i32,
    /// Period-of-year, `0..46`.
    pub index: usize,
    pub start: NaiveDate,
    pub length_days: u32,
}

impl Period {
    /// Last day covered by the period (inclusive).
    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.length_days as i64 - 1)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct AxisRange {
    start_year: i32,
    end_year: i32,
}

/// Ordered 8-day periods over `[start_year, end_year]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AxisRange", into = "AxisRange")]
pub struct TimeAxis {
    start_year: i32,
    end_year: i32,
    entries: Vec<Period>,
}

impl TryFrom<AxisRange> for TimeAxis {
    type Error = Error;
    fn try_from(r: AxisRange) -> Result<Self> {
        TimeAxis::new(r.start_year, r.end_year)
    }
}

impl From<TimeAxis> for AxisRange {
    fn from(a: TimeAxis) -> Self {
        AxisRange { start_year: a.start_year, end_year: a.end_year }
    }
}

impl TimeAxis {
    pub fn new(start_year: i32, end_year: i32) -> Result<Self> {
        if end_year < start_year {
            return Err(Error::Domain(format!("time axis end year {end_year} precedes start year {start_year}")));
        }
        let mut entries = Vec::with_capacity((end_year - start_year + 1) as usize * PERIODS_PER_YEAR);
        for year in start_year..=end_year {
            let jan1 =
                NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(|| Error::Domain(format!("unsupported year {year}")))?;
            let days_in_year = if jan1.leap_year() { 366 } else { 365 };
            for index in 0..PERIODS_PER_YEAR {
                let offset = index as u32 * PERIOD_DAYS;
                let length_days = if index + 1 == PERIODS_PER_YEAR { days_in_year - offset } else { PERIOD_DAYS };
                entries.push(Period { year, index, start: jan1 + Duration::days(offset as i64), length_days });
            }
        }
        Ok(Self { start_year, end_year, entries })
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.end_year
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Period] {
        &self.entries
    }

    pub fn period(&self, step: usize) -> Result<&Period> {
        self.entries
            .get(step)
            .ok_or_else(|| Error::Domain(format!("step {step} outside axis of length {}", self.len())))
    }

    pub fn first_day(&self) -> NaiveDate {
        self.entries[0].start
    }

    pub fn last_day(&self) -> NaiveDate {
        self.entries[self.len() - 1].end()
    }

    /// Number of calendar days spanned by the axis.
    pub fn n_days(&self) -> usize {
        (self.last_day() - self.first_day()).num_days() as usize + 1
    }

    /// Step whose period contains `date`.
    pub fn date_to_step(&self, date: NaiveDate) -> Result<usize> {
        if date < self.first_day() || date > self.last_day() {
            return Err(Error::Domain(format!("date {date} outside axis {}..={}", self.first_day(), self.last_day())));
        }
        let year_base = (date.year() - self.start_year) as usize * PERIODS_PER_YEAR;
        let idx = ((date.ordinal0() / PERIOD_DAYS) as usize).min(PERIODS_PER_YEAR - 1);
        Ok(year_base + idx)
    }

    /// Steps whose period starts in `year`.
    pub fn steps_in_year(&self, year: i32) -> std::ops::Range<usize> {
        if year < self.start_year || year > self.end_year {
            return 0..0;
        }
        let base = (year - self.start_year) as usize * PERIODS_PER_YEAR;
        base..base + PERIODS_PER_YEAR
    }

    pub fn year_of(&self, step: usize) -> Result<i32> {
        Ok(self.period(step)?.year)
    }

    pub fn period_of_year(&self, step: usize) -> Result<usize> {
        Ok(self.period(step)?.index)
    }
}
