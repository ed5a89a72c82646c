use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::flow::interpolate_gaps;
use super::time::HourGrid;
use super::FeatureError;

/// Rain signals usable as model inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherSignal {
    /// Hourly rainfall, mm/h.
    Hr,
    /// Minutes of rain within the hour.
    Hd,
    /// Rainfall accumulated over the calendar day, mm.
    Dcr,
}

impl WeatherSignal {
    pub fn name(self) -> &'static str {
        match self {
            WeatherSignal::Hr => "hr",
            WeatherSignal::Hd => "hd",
            WeatherSignal::Dcr => "dcr",
        }
    }
}

/// Hourly rainfall intensity and duration on a grid, with per-day totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    grid: HourGrid,
    hr: Vec<f64>,
    hd: Vec<f64>,
    daily: BTreeMap<NaiveDate, f64>,
}

impl WeatherSeries {
    pub fn new(grid: HourGrid, hr: Vec<f64>, hd: Vec<f64>) -> Result<Self, FeatureError> {
        if hr.len() != grid.len || hd.len() != grid.len {
            return Err(FeatureError::Shape(format!(
                "weather needs {} hours, got hr={} hd={}",
                grid.len,
                hr.len(),
                hd.len()
            )));
        }
        for (t, (&r, &d)) in hr.iter().zip(&hd).enumerate() {
            if !(r >= 0.0 && r.is_finite()) || !(0.0..=60.0).contains(&d) {
                return Err(FeatureError::InvalidWeather {
                    ts: grid.time(t),
                    hr: r,
                    hd: d,
                });
            }
        }
        let mut daily: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for (t, &r) in hr.iter().enumerate() {
            *daily.entry(grid.date(t)).or_default() += r;
        }
        Ok(Self { grid, hr, hd, daily })
    }

    /// Builds a series from possibly incomplete hourly records, linearly
    /// interpolating missing hours.
    pub fn from_records(
        grid: HourGrid,
        records: &[(NaiveDateTime, Option<f64>, Option<f64>)],
    ) -> Result<Self, FeatureError> {
        let mut hr = vec![None; grid.len];
        let mut hd = vec![None; grid.len];
        for (ts, r, d) in records {
            if let Some(t) = grid.index_of(*ts) {
                hr[t] = *r;
                hd[t] = *d;
            }
        }
        let hr = interpolate_gaps(&hr).ok_or(FeatureError::NoWeather)?;
        let hd = interpolate_gaps(&hd).ok_or(FeatureError::NoWeather)?;
        Self::new(grid, hr, hd)
    }

    pub fn grid(&self) -> &HourGrid {
        &self.grid
    }

    pub fn hr(&self) -> &[f64] {
        &self.hr
    }

    pub fn hd(&self) -> &[f64] {
        &self.hd
    }

    /// Daily cumulative rainfall of the day containing grid hour `t`.
    pub fn dcr(&self, t: usize) -> f64 {
        self.daily[&self.grid.date(t)]
    }

    pub fn daily_totals(&self) -> &BTreeMap<NaiveDate, f64> {
        &self.daily
    }

    pub fn value(&self, signal: WeatherSignal, t: usize) -> f64 {
        match signal {
            WeatherSignal::Hr => self.hr[t],
            WeatherSignal::Hd => self.hd[t],
            WeatherSignal::Dcr => self.dcr(t),
        }
    }
}
