use serde::{Deserialize, Serialize};

use super::{PipelineError, Sample};
use crate::features::WeatherSeries;

/// Weather condition selecting test hours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Always,
    HrZero,
    HrAbove(f64),
    DcrZero,
    /// Daily cumulative rainfall in `(lo, hi]`.
    DcrBand { lo: f64, hi: f64 },
    DcrAbove(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFilter {
    pub id: String,
    pub predicate: Predicate,
}

impl ScenarioFilter {
    pub fn new(id: &str, predicate: Predicate) -> Self {
        Self { id: id.to_string(), predicate }
    }

    /// Whether an hour with rainfall `hr` on a day totalling `dcr` is kept.
    pub fn keeps(&self, hr: f64, dcr: f64) -> bool {
        match self.predicate {
            Predicate::Always => true,
            Predicate::HrZero => hr == 0.0,
            Predicate::HrAbove(x) => hr > x,
            Predicate::DcrZero => dcr == 0.0,
            Predicate::DcrBand { lo, hi } => dcr > lo && dcr <= hi,
            Predicate::DcrAbove(x) => dcr > x,
        }
    }

    pub fn needs_weather(&self) -> bool {
        self.predicate != Predicate::Always
    }
}

/// Overall, the hourly and daily rain bands, and heavy hourly rain.
///
/// `dcr>3` completes the daily bands so that they cover every test hour.
pub fn default_scenarios() -> Vec<ScenarioFilter> {
    use Predicate::*;
    vec![
        ScenarioFilter::new("all", Always),
        ScenarioFilter::new("hr=0", HrZero),
        ScenarioFilter::new("hr>0", HrAbove(0.0)),
        ScenarioFilter::new("dcr=0", DcrZero),
        ScenarioFilter::new("0<dcr<=1", DcrBand { lo: 0.0, hi: 1.0 }),
        ScenarioFilter::new("1<dcr<=3", DcrBand { lo: 1.0, hi: 3.0 }),
        ScenarioFilter::new("dcr>3", DcrAbove(3.0)),
        ScenarioFilter::new("hr>1", HrAbove(1.0)),
    ]
}

/// Size of a scenario subset and the share of zero entries in its demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub hours: usize,
    /// `None` when the subset is empty.
    pub zero_fraction: Option<f64>,
}

/// Positions of the samples kept by `filter`, with their stats.
pub fn apply_scenario(
    samples: &[Sample],
    weather: Option<&WeatherSeries>,
    filter: &ScenarioFilter,
) -> Result<(Vec<usize>, ScenarioStats), PipelineError> {
    let mut kept = Vec::new();
    for (pos, s) in samples.iter().enumerate() {
        let keep = if filter.needs_weather() {
            let w = weather.ok_or_else(|| PipelineError::Empty(format!("scenario {} needs weather data", filter.id)))?;
            let t = w.grid().index_of(s.timestamp).ok_or_else(|| PipelineError::MissingSample {
                ts: s.timestamp,
                reason: format!("weather does not cover scenario {}", filter.id),
            })?;
            filter.keeps(w.hr()[t], w.dcr(t))
        } else {
            true
        };
        if keep {
            kept.push(pos);
        }
    }
    let entries: usize = kept.iter().map(|&p| samples[p].target.len()).sum();
    let zeros: usize = kept
        .iter()
        .map(|&p| samples[p].target.iter().filter(|&&v| v == 0.0).count())
        .sum();
    let zero_fraction = (entries > 0).then(|| zeros as f64 / entries as f64);
    let hours = kept.len();
    Ok((kept, ScenarioStats { hours, zero_fraction }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{CalendarEncoding, HourGrid};
    use crate::numerics::Tensor;
    use chrono::NaiveDate;

    fn fixture() -> (Vec<Sample>, WeatherSeries) {
        let grid = HourGrid::days(NaiveDate::from_ymd_opt(2022, 5, 1).unwrap(), 4);
        let hr: Vec<f64> = (0..96)
            .map(|i| match i / 24 {
                0 => 0.0,
                1 => if i % 24 == 10 { 0.5 } else { 0.0 },
                2 => if (8..11).contains(&(i % 24)) { 0.9 } else { 0.0 },
                _ => if i % 24 == 12 { 4.0 } else { 0.0 },
            })
            .collect();
        let hd = hr.iter().map(|&h| if h > 0.0 { 30.0 } else { 0.0 }).collect();
        let w = WeatherSeries::new(grid, hr, hd).unwrap();
        let samples = (0..96)
            .filter(|t| (7..=21).contains(&(t % 24)))
            .map(|t| Sample {
                index: t,
                timestamp: grid.time(t),
                features: Tensor::zeros(2, 4),
                calendar: CalendarEncoding::new([0; 6]).unwrap(),
                target: vec![(t % 3) as f64, 1.0],
            })
            .collect();
        (samples, w)
    }

    #[test]
    fn partitions_cover_all_hours() {
        let (samples, w) = fixture();
        let sc = default_scenarios();
        let hours: Vec<usize> = sc.iter().map(|f| apply_scenario(&samples, Some(&w), f).unwrap().1.hours).collect();
        assert_eq!(hours[0], 60);
        assert_eq!(hours[1] + hours[2], hours[0]);
        assert_eq!(hours[3] + hours[4] + hours[5] + hours[6], hours[0]);
        assert_eq!(hours[2], 5);
        assert_eq!(hours[3], 15);
        assert_eq!(hours[4], 15);
        assert_eq!(hours[5], 15);
        assert_eq!(hours[6], 15);
        assert_eq!(hours[7], 1);
    }

    #[test]
    fn zero_fraction_from_same_subset() {
        let (samples, w) = fixture();
        let (kept, stats) = apply_scenario(&samples, Some(&w), &ScenarioFilter::new("hr>0", Predicate::HrAbove(0.0))).unwrap();
        let zeros = kept.iter().filter(|&&p| samples[p].target[0] == 0.0).count();
        assert_eq!(stats.zero_fraction.unwrap(), zeros as f64 / (2 * kept.len()) as f64);
    }

    #[test]
    fn empty_subset_has_no_fraction() {
        let (samples, w) = fixture();
        let (kept, stats) = apply_scenario(&samples, Some(&w), &ScenarioFilter::new("x", Predicate::HrAbove(100.0))).unwrap();
        assert!(kept.is_empty());
        assert_eq!(stats, ScenarioStats { hours: 0, zero_fraction: None });
    }

    #[test]
    fn weather_required_for_rain_filters() {
        let (samples, _) = fixture();
        assert!(apply_scenario(&samples, None, &default_scenarios()[0]).is_ok());
        assert!(apply_scenario(&samples, None, &default_scenarios()[1]).is_err());
    }
}
