use std::ops::Range;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::features::{
    assemble_features, encode_calendar, CalendarEncoding, CalendarTable, FeatureError, FeatureSpec, HourGrid,
    ODDemandPanel, Standardizer, WeatherSeries, ZoneFlowSeries,
};
use crate::numerics::Tensor;

/// Train and test windows as half-open timestamp ranges.
///
/// Training uses every hour of its window; testing keeps only hours of day in
/// `test_hours`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_start: NaiveDateTime,
    pub train_end: NaiveDateTime,
    pub test_start: NaiveDateTime,
    pub test_end: NaiveDateTime,
    #[serde(default = "default_test_hours")]
    pub test_hours: [u32; 2],
}

fn default_test_hours() -> [u32; 2] {
    [7, 21]
}

impl SplitSpec {
    /// Consecutive windows on `grid`: `train_days` then `test_days`.
    pub fn consecutive(grid: &HourGrid, train_days: usize, test_days: usize) -> Self {
        let t = |i: usize| grid.time(i);
        Self {
            train_start: t(0),
            train_end: t(train_days * 24),
            test_start: t(train_days * 24),
            test_end: t((train_days + test_days) * 24),
            test_hours: default_test_hours(),
        }
    }

    /// Every problem found, as `(key, message)`.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.train_start >= self.train_end {
            out.push(("train_end".into(), "must be after train_start".into()));
        }
        if self.test_start >= self.test_end {
            out.push(("test_end".into(), "must be after test_start".into()));
        }
        if self.train_start < self.test_end && self.test_start < self.train_end {
            out.push(("test_start".into(), "train and test windows overlap".into()));
        }
        let [a, b] = self.test_hours;
        if a > b || b > 23 {
            out.push(("test_hours".into(), format!("need first <= last <= 23, got [{a}, {b}]")));
        }
        for (key, ts) in [
            ("train_start", self.train_start),
            ("train_end", self.train_end),
            ("test_start", self.test_start),
            ("test_end", self.test_end),
        ] {
            if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
                out.push((key.into(), format!("{ts} is not on an hour boundary")));
            }
        }
        out
    }

    fn window(grid: &HourGrid, start: NaiveDateTime, end: NaiveDateTime, name: &str) -> Result<Range<usize>, PipelineError> {
        let outside = || PipelineError::Split(format!("{name} window {start}..{end} is not inside the data grid {}..{}", grid.start, grid.end()));
        if start < grid.start || end > grid.end() {
            return Err(outside());
        }
        let a = grid.index_of(start).ok_or_else(outside)?;
        let b = if end == grid.end() { grid.len } else { grid.index_of(end).ok_or_else(outside)? };
        Ok(a..b)
    }

    fn checked(&self) -> Result<(), PipelineError> {
        match self.problems().into_iter().next() {
            None => Ok(()),
            Some((k, m)) => Err(PipelineError::Split(format!("{k}: {m}"))),
        }
    }

    /// Grid indices of the training window.
    pub fn train_range(&self, grid: &HourGrid) -> Result<Range<usize>, PipelineError> {
        self.checked()?;
        Self::window(grid, self.train_start, self.train_end, "train")
    }

    /// Grid indices of the test window, restricted to the test hours.
    pub fn test_indices(&self, grid: &HourGrid) -> Result<Vec<usize>, PipelineError> {
        self.checked()?;
        let [a, b] = self.test_hours;
        Ok(Self::window(grid, self.test_start, self.test_end, "test")?
            .filter(|&t| (a..=b).contains(&grid.hour_of_day(t)))
            .collect())
    }
}

/// Data shared by every variant of one experiment.
#[derive(Clone, Copy)]
pub struct Context<'a> {
    /// Demand restricted to the forecast OD set.
    pub panel: &'a ODDemandPanel,
    pub weather: Option<&'a WeatherSeries>,
    pub flows: Option<&'a ZoneFlowSeries>,
    pub calendar: Option<&'a CalendarTable>,
}

/// One timestamp: `[N, L]` features, its calendar encoding and raw demand `[N]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub timestamp: NaiveDateTime,
    pub features: Tensor,
    pub calendar: CalendarEncoding,
    pub target: Vec<f64>,
}

fn unavailable(e: &FeatureError) -> bool {
    matches!(e, FeatureError::InsufficientHistory { .. } | FeatureError::MissingOffset { .. })
}

/// Raw samples at the given grid indices.
///
/// With `skip_missing`, hours lacking history or a context offset are dropped;
/// otherwise they are an error.
pub fn build_samples(
    spec: &FeatureSpec,
    ctx: Context<'_>,
    indices: impl IntoIterator<Item = usize>,
    skip_missing: bool,
) -> Result<Vec<Sample>, PipelineError> {
    let grid = *ctx.panel.grid();
    let mut out = Vec::new();
    for t in indices {
        let fm = match assemble_features(spec, ctx.panel, ctx.weather, ctx.flows, t) {
            Ok(fm) => fm,
            Err(e) if skip_missing && unavailable(&e) => continue,
            Err(e) if unavailable(&e) => {
                return Err(PipelineError::MissingSample {
                    ts: grid.time(t),
                    reason: e.to_string(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let calendar = match (spec.embedding, ctx.calendar) {
            (true, None) => return Err(PipelineError::Empty(format!("variant {} needs a calendar table", spec.variant))),
            (true, Some(table)) => encode_calendar(fm.timestamp, table)?,
            (false, Some(table)) => encode_calendar(fm.timestamp, table)
                .unwrap_or_else(|_| CalendarEncoding::new([0; 6]).expect("class 0 is always valid")),
            (false, None) => CalendarEncoding::new([0; 6]).expect("class 0 is always valid"),
        };
        out.push(Sample {
            index: t,
            timestamp: fm.timestamp,
            features: fm.x,
            calendar,
            target: ctx.panel.hour_row(t).iter().map(|&c| c as f64).collect(),
        });
    }
    Ok(out)
}

/// Replaces every sample's features with their scaled version.
pub fn standardize_samples(samples: &mut [Sample], scaler: &Standardizer) -> Result<(), PipelineError> {
    for s in samples {
        s.features = scaler.apply(&s.features)?;
    }
    Ok(())
}
