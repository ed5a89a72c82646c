use std::collections::HashMap;
use std::ops::{Range, RangeInclusive};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::time::HourGrid;
use super::FeatureError;
use crate::graphs::ODPair;
use crate::numerics::Tensor;

/// Hour offsets of the base lags, oldest first: one week, one day, two hours, one hour.
pub const LAG_OFFSETS: [usize; 4] = [168, 24, 2, 1];

/// Departure-hour trip record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trip {
    pub departure: NaiveDateTime,
    pub origin_station: String,
    pub dest_station: String,
}

/// Hourly trip counts per OD pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ODDemandPanel {
    grid: HourGrid,
    od_pairs: Vec<ODPair>,
    /// Row-major `[hour][od]`.
    counts: Vec<u32>,
}

impl ODDemandPanel {
    pub fn new(grid: HourGrid, od_pairs: Vec<ODPair>, counts: Vec<u32>) -> Result<Self, FeatureError> {
        if counts.len() != grid.len * od_pairs.len() {
            return Err(FeatureError::Shape(format!(
                "panel needs {} x {} counts, got {}",
                grid.len,
                od_pairs.len(),
                counts.len()
            )));
        }
        for (i, p) in od_pairs.iter().enumerate() {
            if p.index != i {
                return Err(FeatureError::Shape(format!("OD pair {i} carries index {}", p.index)));
            }
        }
        Ok(Self {
            grid,
            od_pairs,
            counts,
        })
    }

    pub fn grid(&self) -> &HourGrid {
        &self.grid
    }

    pub fn od_pairs(&self) -> &[ODPair] {
        &self.od_pairs
    }

    pub fn n_pairs(&self) -> usize {
        self.od_pairs.len()
    }

    pub fn n_hours(&self) -> usize {
        self.grid.len
    }

    pub fn get(&self, hour: usize, od: usize) -> u32 {
        self.counts[hour * self.od_pairs.len() + od]
    }

    pub fn hour_row(&self, hour: usize) -> &[u32] {
        let n = self.od_pairs.len();
        &self.counts[hour * n..(hour + 1) * n]
    }

    pub fn series(&self, od: usize, hours: Range<usize>) -> Vec<f64> {
        hours.map(|t| self.get(t, od) as f64).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Sub-panel restricted to `pairs` (matched by origin/destination),
    /// re-indexed densely in the order given.
    pub fn select(&self, pairs: &[ODPair]) -> Result<Self, FeatureError> {
        let lookup: HashMap<(&str, &str), usize> = self
            .od_pairs
            .iter()
            .map(|p| ((p.origin.as_str(), p.destination.as_str()), p.index))
            .collect();
        let src: Vec<usize> = pairs
            .iter()
            .map(|p| {
                lookup
                    .get(&(p.origin.as_str(), p.destination.as_str()))
                    .copied()
                    .ok_or_else(|| FeatureError::UnknownOd(format!("{}->{}", p.origin, p.destination)))
            })
            .collect::<Result<_, _>>()?;
        let mut counts = Vec::with_capacity(self.grid.len * src.len());
        for t in 0..self.grid.len {
            let row = self.hour_row(t);
            counts.extend(src.iter().map(|&i| row[i]));
        }
        let od_pairs = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| ODPair::new(i, &p.origin, &p.destination))
            .collect();
        Self::new(self.grid, od_pairs, counts)
    }

    /// `[N, 4]` matrix of `[Y(t-168h), Y(t-24h), Y(t-2h), Y(t-1h)]`.
    pub fn lags(&self, t: usize) -> Result<Tensor, FeatureError> {
        if t < LAG_OFFSETS[0] || t >= self.grid.len {
            return Err(FeatureError::InsufficientHistory {
                requested: self.grid.time(t),
                earliest: self.grid.time(LAG_OFFSETS[0]),
            });
        }
        let n = self.n_pairs();
        let mut x = Tensor::zeros(n, LAG_OFFSETS.len());
        for (c, off) in LAG_OFFSETS.iter().enumerate() {
            let row = self.hour_row(t - off);
            for (od, &v) in row.iter().enumerate() {
                x.set(od, c, v as f64);
            }
        }
        Ok(x)
    }
}

/// All ordered pairs of distinct zones, origin-major in the given zone order.
pub fn all_od_pairs(zone_ids: &[String]) -> Vec<ODPair> {
    let mut out = Vec::new();
    for o in zone_ids {
        for d in zone_ids {
            if o != d {
                out.push(ODPair::new(out.len(), o, d));
            }
        }
    }
    out
}

/// Counts trips per (departure hour, origin zone, destination zone).
/// Trips whose stations fall in the same zone are discarded.
pub fn trips_to_panel(
    trips: &[Trip],
    station_zone: &HashMap<String, String>,
    zone_ids: &[String],
    grid: HourGrid,
) -> Result<ODDemandPanel, FeatureError> {
    let pairs = all_od_pairs(zone_ids);
    let index: HashMap<(&str, &str), usize> = pairs
        .iter()
        .map(|p| ((p.origin.as_str(), p.destination.as_str()), p.index))
        .collect();
    let n = pairs.len();
    let mut counts = vec![0u32; grid.len * n];
    for trip in trips {
        let zone = |s: &str| {
            station_zone
                .get(s)
                .ok_or_else(|| FeatureError::UnknownStation(s.to_string()))
        };
        let o = zone(&trip.origin_station)?;
        let d = zone(&trip.dest_station)?;
        let t = grid
            .index_of(trip.departure)
            .ok_or(FeatureError::OutsideGrid(trip.departure))?;
        if o == d {
            continue;
        }
        let od = *index
            .get(&(o.as_str(), d.as_str()))
            .ok_or_else(|| FeatureError::UnknownOd(format!("{o}->{d}")))?;
        counts[t * n + od] += 1;
    }
    ODDemandPanel::new(grid, pairs, counts)
}

/// Shortest prefix of ODs (by descending demand within `day_hours` over
/// `window`, ties by index) whose cumulative share reaches `p_bike`.
pub fn filter_top_ods(
    panel: &ODDemandPanel,
    p_bike: f64,
    day_hours: RangeInclusive<u32>,
    window: Range<usize>,
) -> Result<Vec<ODPair>, FeatureError> {
    if !(p_bike > 0.0 && p_bike <= 1.0) {
        return Err(FeatureError::InvalidShare(p_bike));
    }
    let n = panel.n_pairs();
    let mut totals = vec![0u64; n];
    for t in window.start..window.end.min(panel.n_hours()) {
        if !day_hours.contains(&panel.grid.hour_of_day(t)) {
            continue;
        }
        for (acc, &c) in totals.iter_mut().zip(panel.hour_row(t)) {
            *acc += c as u64;
        }
    }
    let grand: u64 = totals.iter().sum();
    if grand == 0 {
        return Err(FeatureError::NoDemand);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| totals[b].cmp(&totals[a]).then(a.cmp(&b)));
    let threshold = p_bike * grand as f64;
    let mut cum = 0u64;
    let mut out = Vec::new();
    for i in order {
        cum += totals[i];
        out.push(panel.od_pairs[i].clone());
        if cum as f64 >= threshold {
            break;
        }
    }
    Ok(out)
}

/// Earliest grid index at which all base lags exist.
pub fn first_lagged_index() -> usize {
    LAG_OFFSETS[0]
}
