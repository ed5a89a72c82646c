use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::time::HourGrid;
use super::FeatureError;

/// Occupancy (percent) above which a 6-minute period is a sensor fault.
pub const MAX_OCCUPANCY_PCT: f64 = 50.0;
/// Minimum number of valid 6-minute periods for an hour to be kept.
pub const MIN_VALID_PERIODS: usize = 5;
/// 6-minute periods per hour.
pub const PERIODS_PER_HOUR: f64 = 10.0;

/// One raw loop-detector record (6-minute period).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub ts: NaiveDateTime,
    pub loop_id: String,
    /// Vehicles counted in the period; `None` when the sensor reported nothing.
    pub flow: Option<f64>,
    /// Occupancy rate in percent.
    pub occupancy: Option<f64>,
}

impl LoopRecord {
    pub fn is_valid(&self) -> bool {
        matches!(self.flow, Some(f) if f.is_finite() && f >= 0.0)
            && matches!(self.occupancy, Some(o) if o <= MAX_OCCUPANCY_PCT)
    }
}

/// Hourly vehicle flow per loop; `None` marks a dropped hour.
pub type LoopHourly = BTreeMap<String, Vec<Option<f64>>>;

/// Aggregates 6-minute records into hourly flows per loop.
///
/// An hour is kept when at least five periods are valid; its flow is the
/// valid-period sum scaled to a full hour (`× 10 / valid count`).
pub fn clean_loop_data(records: &[LoopRecord], grid: &HourGrid) -> LoopHourly {
    let mut acc: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    for r in records {
        let slots = acc
            .entry(r.loop_id.as_str())
            .or_insert_with(|| vec![(0.0, 0); grid.len]);
        let Some(t) = grid.index_of(r.ts) else {
            continue;
        };
        if r.is_valid() {
            let slot = &mut slots[t];
            slot.0 += r.flow.unwrap_or(0.0);
            slot.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(id, slots)| {
            let hourly = slots
                .into_iter()
                .map(|(sum, n)| (n >= MIN_VALID_PERIODS).then(|| sum * PERIODS_PER_HOUR / n as f64))
                .collect();
            (id.to_string(), hourly)
        })
        .collect()
}

/// Fills `None` gaps by linear interpolation between the nearest known
/// neighbours; leading and trailing gaps take the nearest known value.
/// Returns `None` if no value is known.
pub fn interpolate_gaps(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|_| i))
        .collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if let Some(v) = values[i] {
            v
        } else if i < first {
            values[first].unwrap()
        } else if i > last {
            values[last].unwrap()
        } else {
            let right = known.partition_point(|&k| k < i);
            let (l, r) = (known[right - 1], known[right]);
            let (vl, vr) = (values[l].unwrap(), values[r].unwrap());
            vl + (vr - vl) * (i - l) as f64 / (r - l) as f64
        };
    }
    Some(out)
}

/// Hourly car flow per zone, gapless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneFlowSeries {
    pub grid: HourGrid,
    pub flows: BTreeMap<String, Vec<f64>>,
}

impl ZoneFlowSeries {
    pub fn get(&self, zone: &str, hour: usize) -> Option<f64> {
        self.flows.get(zone).and_then(|v| v.get(hour)).copied()
    }
}

/// Sums loop flows by zone, then interpolates zone-hours where no loop reported.
pub fn aggregate_flow_by_zone(
    hourly: &LoopHourly,
    loop_zone: &BTreeMap<String, String>,
    zones: &[String],
    grid: &HourGrid,
) -> Result<ZoneFlowSeries, FeatureError> {
    let mut sums: BTreeMap<&str, Vec<Option<f64>>> = zones
        .iter()
        .map(|z| (z.as_str(), vec![None; grid.len]))
        .collect();
    for (loop_id, values) in hourly {
        let zone = loop_zone
            .get(loop_id)
            .ok_or_else(|| FeatureError::UnmappedLoop(loop_id.clone()))?;
        let Some(series) = sums.get_mut(zone.as_str()) else {
            continue;
        };
        for (slot, v) in series.iter_mut().zip(values) {
            if let Some(v) = v {
                *slot = Some(slot.unwrap_or(0.0) + v);
            }
        }
    }
    let mut flows = BTreeMap::new();
    let mut empty = BTreeSet::new();
    for (zone, series) in sums {
        match interpolate_gaps(&series) {
            Some(filled) => {
                flows.insert(zone.to_string(), filled);
            }
            None => {
                empty.insert(zone.to_string());
            }
        }
    }
    if !empty.is_empty() {
        return Err(FeatureError::ZonesWithoutFlow(empty.into_iter().collect()));
    }
    Ok(ZoneFlowSeries { grid: *grid, flows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};

    fn grid() -> HourGrid {
        HourGrid::days(NaiveDate::from_ymd_opt(2019, 3, 1).unwrap(), 1)
    }

    fn periods(hour: usize, flows: &[Option<f64>], occ: f64) -> Vec<LoopRecord> {
        flows
            .iter()
            .enumerate()
            .map(|(k, f)| LoopRecord {
                ts: grid().time(hour) + Duration::minutes(6 * k as i64),
                loop_id: "L1".into(),
                flow: *f,
                occupancy: Some(occ),
            })
            .collect()
    }

    #[test]
    fn complete_hour() {
        let out = clean_loop_data(&periods(3, &[Some(6.0); 10], 10.0), &grid());
        assert_eq!(out["L1"][3], Some(60.0));
        assert_eq!(out["L1"][4], None);
    }

    #[test]
    fn partial_hour_is_scaled() {
        let flows = [Some(10.0), Some(5.0), Some(15.0), Some(12.0), Some(8.0)];
        let out = clean_loop_data(&periods(0, &flows, 10.0), &grid());
        assert_eq!(out["L1"][0], Some(100.0));
    }

    #[test]
    fn four_valid_periods_drop_the_hour() {
        let out = clean_loop_data(&periods(0, &[Some(10.0); 4], 10.0), &grid());
        assert_eq!(out["L1"][0], None);
        // ten periods, but six have missing flow
        let mut flows = vec![None; 6];
        flows.extend([Some(10.0); 4]);
        assert_eq!(clean_loop_data(&periods(0, &flows, 10.0), &grid())["L1"][0], None);
    }

    #[test]
    fn high_occupancy_rejected() {
        let mut recs = periods(0, &[Some(6.0); 10], 10.0);
        for r in recs.iter_mut().take(6) {
            r.occupancy = Some(50.5);
        }
        assert_eq!(clean_loop_data(&recs, &grid())["L1"][0], None);
        recs[0].occupancy = Some(50.0);
        recs[1].occupancy = Some(49.0);
        // six valid periods of 6 vehicles each -> 6 * 6 * 10 / 6
        assert_eq!(clean_loop_data(&recs, &grid())["L1"][0], Some(60.0));
    }

    #[test]
    fn interpolation_rules() {
        assert_eq!(
            interpolate_gaps(&[None, Some(70.0), None, Some(90.0), None]).unwrap(),
            vec![70.0, 70.0, 80.0, 90.0, 90.0]
        );
        assert_eq!(
            interpolate_gaps(&[Some(100.0), None, Some(200.0)]).unwrap(),
            vec![100.0, 150.0, 200.0]
        );
        assert_eq!(interpolate_gaps(&[None, None]), None);
    }

    #[test]
    fn zone_sums_and_errors() {
        let g = grid();
        let mut hourly = LoopHourly::new();
        hourly.insert("a".into(), vec![Some(30.0); g.len]);
        let mut b = vec![Some(50.0); g.len];
        b[5] = None;
        hourly.insert("b".into(), b);
        let map: BTreeMap<String, String> =
            [("a".into(), "z1".into()), ("b".into(), "z1".into())].into();
        let s = aggregate_flow_by_zone(&hourly, &map, &["z1".into()], &g).unwrap();
        assert_eq!(s.get("z1", 0), Some(80.0));
        assert_eq!(s.get("z1", 5), Some(30.0));

        let err = aggregate_flow_by_zone(&hourly, &map, &["z1".into(), "z2".into()], &g).unwrap_err();
        assert_eq!(err, FeatureError::ZonesWithoutFlow(vec!["z2".into()]));
        let partial: BTreeMap<String, String> = [("a".into(), "z1".into())].into();
        assert!(matches!(
            aggregate_flow_by_zone(&hourly, &partial, &["z1".into()], &g),
            Err(FeatureError::UnmappedLoop(_))
        ));
    }
}
