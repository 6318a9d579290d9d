//! Half-hourly (or other uniform granularity) demand time series and the
//! calendar used for temporal features.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};

use crate::CoreError;

pub const DEFAULT_GRANULARITY_MINUTES: u32 = 30;
const MINUTES_PER_DAY: u32 = 24 * 60;

/// Energy per period (kWh) for one customer or one aggregated group.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    customer_id: String,
    start: NaiveDateTime,
    granularity_minutes: u32,
    values: Vec<f64>,
}

impl DemandSeries {
    pub fn new(
        customer_id: impl Into<String>,
        start: NaiveDateTime,
        granularity_minutes: u32,
        values: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if granularity_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(granularity_minutes) {
            return Err(CoreError::BadGranularity(granularity_minutes));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(CoreError::BadValue { index, value });
        }
        Ok(Self {
            customer_id: customer_id.into(),
            start,
            granularity_minutes,
            values,
        })
    }

    /// Convenience constructor: midnight of `date`, 30-minute periods.
    pub fn daily(
        customer_id: impl Into<String>,
        date: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self, CoreError> {
        Self::new(
            customer_id,
            date.and_hms_opt(0, 0, 0).expect("midnight"),
            DEFAULT_GRANULARITY_MINUTES,
            values,
        )
    }

    pub fn customer_id(&self) -> &str {
        &self.customer_id
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn granularity_minutes(&self) -> u32 {
        self.granularity_minutes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of periods in one day (48 at 30-minute granularity).
    pub fn periods_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.granularity_minutes) as usize
    }

    /// Number of whole days covered, rejecting empty and partial-day series.
    pub fn whole_days(&self) -> Result<usize, CoreError> {
        let per_day = self.periods_per_day();
        if self.values.is_empty() {
            return Err(CoreError::EmptySeries);
        }
        if !self.values.len().is_multiple_of(per_day) {
            return Err(CoreError::PartialDay {
                len: self.values.len(),
                per_day,
            });
        }
        Ok(self.values.len() / per_day)
    }

    /// Values of day `d` (0-based). Panics if out of range.
    pub fn day(&self, d: usize) -> &[f64] {
        let n = self.periods_per_day();
        &self.values[d * n..(d + 1) * n]
    }

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::minutes(index as i64 * self.granularity_minutes as i64)
    }

    /// Period-of-day slot of sample `index`.
    pub fn period_of_day(&self, index: usize) -> usize {
        let t = self.timestamp(index);
        ((t.hour() * 60 + t.minute()) / self.granularity_minutes) as usize
    }

    /// Copy of the samples in `range`, with the start timestamp moved along.
    pub fn slice(&self, range: core::ops::Range<usize>) -> DemandSeries {
        DemandSeries {
            customer_id: self.customer_id.clone(),
            start: self.timestamp(range.start),
            granularity_minutes: self.granularity_minutes,
            values: self.values[range].to_vec(),
        }
    }

    /// Element-wise sum of aligned series.
    pub fn aggregate(id: impl Into<String>, members: &[&DemandSeries]) -> Result<Self, CoreError> {
        let first = members
            .first()
            .ok_or_else(|| CoreError::Misaligned("no members to aggregate".into()))?;
        let mut values = alloc::vec![0.0; first.len()];
        for m in members {
            if m.start != first.start
                || m.granularity_minutes != first.granularity_minutes
                || m.len() != first.len()
            {
                return Err(CoreError::Misaligned(alloc::format!(
                    "{} does not match {}",
                    m.customer_id,
                    first.customer_id
                )));
            }
            for (acc, v) in values.iter_mut().zip(&m.values) {
                *acc += v;
            }
        }
        Self::new(id, first.start, first.granularity_minutes, values)
    }
}

/// Off-day calendar: weekends plus an explicit holiday list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Calendar {
    holidays: BTreeSet<NaiveDate>,
}

impl Calendar {
    pub fn new(holidays: impl IntoIterator<Item = NaiveDate>) -> Self {
        Self {
            holidays: holidays.into_iter().collect(),
        }
    }

    pub fn holidays(&self) -> impl Iterator<Item = &NaiveDate> {
        self.holidays.iter()
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.holidays.contains(&date)
    }

    /// Weekend or listed holiday.
    pub fn is_off_day(&self, date: NaiveDate) -> bool {
        matches!(date.weekday(), Weekday::Sat | Weekday::Sun) || self.is_holiday(date)
    }
}
