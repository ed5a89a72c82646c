use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Gapless hourly time axis starting at an hour boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourGrid {
    pub start: NaiveDateTime,
    pub len: usize,
}

impl HourGrid {
    pub fn new(start: NaiveDateTime, len: usize) -> Self {
        Self {
            start: truncate_to_hour(start),
            len,
        }
    }

    /// Grid covering whole days `first..first + days`.
    pub fn days(first: NaiveDate, days: usize) -> Self {
        Self::new(first.and_time(NaiveTime::MIN), days * 24)
    }

    pub fn time(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    /// Slot containing `ts` (its hour), if inside the grid.
    pub fn index_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let delta = (truncate_to_hour(ts) - self.start).num_hours();
        (delta >= 0 && (delta as usize) < self.len).then_some(delta as usize)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.time(self.len)
    }

    pub fn hour_of_day(&self, index: usize) -> u32 {
        self.time(index).hour()
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.time(index).date()
    }
}

pub fn truncate_to_hour(ts: NaiveDateTime) -> NaiveDateTime {
    ts.date().and_hms_opt(ts.hour(), 0, 0).expect("valid hour")
}

const FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO-8601 local timestamp (seconds optional, `T` or space separator).
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, FeatureError> {
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .ok_or_else(|| FeatureError::Parse(format!("bad timestamp {s:?}")))
}

pub fn format_timestamp(ts: NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S").to_string()
}

pub fn parse_date(s: &str) -> Result<NaiveDate, FeatureError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| FeatureError::Parse(format!("bad date {s:?}")))
}
