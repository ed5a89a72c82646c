use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Number of classes of each calendar feature, in encoding order:
/// hour, weekday, business day, school holiday, holiday departure, holiday return.
pub const CALENDAR_CLASSES: [usize; 6] = [18, 7, 2, 2, 2, 2];
pub const CALENDAR_FEATURES: usize = CALENDAR_CLASSES.len();

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarFlags {
    pub business_day: bool,
    pub school_holiday: bool,
    pub holiday_departure: bool,
    pub holiday_return: bool,
}

/// Per-date flags, usually read from the calendar CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalendarTable {
    pub days: BTreeMap<NaiveDate, CalendarFlags>,
}

impl CalendarTable {
    pub fn get(&self, date: NaiveDate) -> Option<&CalendarFlags> {
        self.days.get(&date)
    }
}

/// Class indices of the six calendar features of one hour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CalendarEncoding {
    pub classes: [usize; CALENDAR_FEATURES],
}

/// Hours 6..=22 map to classes 1..=17, every other hour to class 0.
pub fn hour_class(hour: u32) -> usize {
    if (6..=22).contains(&hour) {
        (hour - 6 + 1) as usize
    } else {
        0
    }
}

impl CalendarEncoding {
    pub fn new(classes: [usize; CALENDAR_FEATURES]) -> Result<Self, FeatureError> {
        for (i, (&c, &n)) in classes.iter().zip(&CALENDAR_CLASSES).enumerate() {
            if c >= n {
                return Err(FeatureError::OneHot { feature: i, class: c });
            }
        }
        Ok(Self { classes })
    }

    /// One-hot vector of feature `i`.
    pub fn one_hot(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; CALENDAR_CLASSES[i]];
        v[self.classes[i]] = 1.0;
        v
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        (0..CALENDAR_FEATURES).map(|i| self.one_hot(i)).collect()
    }
}

pub fn encode_calendar(ts: NaiveDateTime, table: &CalendarTable) -> Result<CalendarEncoding, FeatureError> {
    let date = ts.date();
    let flags = table.get(date).ok_or(FeatureError::DateNotInCalendar(date))?;
    CalendarEncoding::new([
        hour_class(ts.hour()),
        date.weekday().num_days_from_monday() as usize,
        flags.business_day as usize,
        flags.school_holiday as usize,
        flags.holiday_departure as usize,
        flags.holiday_return as usize,
    ])
}
