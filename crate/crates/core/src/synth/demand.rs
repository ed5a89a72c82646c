use chrono::{Datelike, Duration, NaiveDateTime};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::city::phase_of;
use super::{SynthCity, SynthConfig, SynthError, SynthWeather};
use crate::features::{all_od_pairs, ODDemandPanel, Trip};

/// Ground-truth rate factors of one hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourTruth {
    pub ts: NaiveDateTime,
    /// Calendar profile value for the day type and hour.
    pub profile: f64,
    /// Holiday damping applied (1 outside school holidays).
    pub holiday: f64,
    /// `exp(-beta * hr)`.
    pub rain: f64,
    /// Share of the previous hour's suppressed demand added back (0 unless
    /// this is the first dry hour after rain).
    pub recovery: f64,
    /// Expected trips over all OD pairs.
    pub expected_total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Demand {
    /// Counts over all ordered zone pairs, zone ids in city order.
    pub panel: ODDemandPanel,
    pub truth: Vec<HourTruth>,
    /// Expected trips suppressed by rain per `[hour][origin zone]`.
    pub suppressed: Vec<Vec<f64>>,
}

/// Gravity shares for each phase, normalized to sum to 1 over OD pairs.
fn gravity_shares(config: &SynthConfig, city: &SynthCity) -> [Vec<f64>; 3] {
    let n = city.zones.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d))).collect();
    std::array::from_fn(|phase| {
        let raw: Vec<f64> = pairs
            .iter()
            .map(|&(o, d)| {
                let (co, cd) = (city.zones[o].centroid, city.zones[d].centroid);
                let dist = ((co[0] - cd[0]).powi(2) + (co[1] - cd[1]).powi(2)).sqrt() / config.zone_size;
                let prod = city.archetypes[o].masses(phase).0 * city.size[o];
                let attr = city.archetypes[d].masses(phase).1 * city.size[d];
                prod * attr * dist.powf(-config.gravity_exponent)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    })
}

/// Poisson counts per (hour, OD) with rate
/// `base × profile × holiday × exp(-beta·hr) × gravity share`, plus a
/// recovery term in the first dry hour after rain.
pub fn generate_demand(config: &SynthConfig, city: &SynthCity, weather: &SynthWeather) -> Result<Demand, SynthError> {
    config.validate()?;
    let mut rng = config.rng(3);
    let w = &weather.series;
    let grid = *w.grid();
    let n = city.zones.len();
    let n_od = n * (n - 1);
    let shares = gravity_shares(config, city);
    let origin_of: Vec<usize> = (0..n).flat_map(|o| std::iter::repeat_n(o, n - 1)).collect();

    let mut counts = vec![0u32; grid.len * n_od];
    let mut truth = Vec::with_capacity(grid.len);
    let mut suppressed = vec![vec![0.0; n]; grid.len];
    let mut prev_dry: Vec<f64> = vec![0.0; n_od];
    let mut prev_rain = 1.0;
    for t in 0..grid.len {
        let ts = grid.time(t);
        let hour = grid.hour_of_day(t);
        let date = ts.date();
        let weekend = date.weekday().num_days_from_monday() >= 5;
        let profile = if weekend { config.weekend_profile[hour as usize] } else { config.weekday_profile[hour as usize] };
        let holiday = match city.calendar.get(date) {
            Some(f) if f.school_holiday => config.holiday_damping,
            _ => 1.0,
        };
        let hr = w.hr()[t];
        let rain = (-config.beta * hr).exp();
        let recovery = if t > 0 && hr == 0.0 && w.hr()[t - 1] > 0.0 {
            config.recovery_share * w.hd()[t - 1] / 60.0
        } else {
            0.0
        };
        let scale = config.base_rate * profile * holiday;
        let share = &shares[phase_of(hour)];
        let mut expected_total = 0.0;
        for od in 0..n_od {
            let dry = scale * share[od];
            let lambda = dry * rain + recovery * prev_dry[od] * (1.0 - prev_rain);
            suppressed[t][origin_of[od]] += dry * (1.0 - rain);
            expected_total += lambda;
            counts[t * n_od + od] = if lambda > 0.0 {
                Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u32
            } else {
                0
            };
            prev_dry[od] = dry;
        }
        prev_rain = rain;
        truth.push(HourTruth {
            ts,
            profile,
            holiday,
            rain,
            recovery,
            expected_total,
        });
    }
    let panel = ODDemandPanel::new(grid, all_od_pairs(&city.zone_ids()), counts)?;
    Ok(Demand { panel, truth, suppressed })
}

/// Station-level trips: each counted trip departs at a random minute of its
/// hour between random stations of its origin and destination zones.
pub fn expand_trips(config: &SynthConfig, city: &SynthCity, demand: &Demand) -> Vec<Trip> {
    let mut rng = config.rng(4);
    let by_zone = city.stations_by_zone();
    let index: std::collections::HashMap<&str, usize> =
        city.zones.iter().enumerate().map(|(i, z)| (z.id.as_str(), i)).collect();
    let pairs = demand.panel.od_pairs();
    let mut out = Vec::new();
    for t in 0..demand.panel.n_hours() {
        let start = demand.panel.grid().time(t);
        for (od, &c) in demand.panel.hour_row(t).iter().enumerate() {
            let o = index[pairs[od].origin.as_str()];
            let d = index[pairs[od].destination.as_str()];
            for _ in 0..c {
                let so = by_zone[o][rng.random_range(0..by_zone[o].len())];
                let sd = by_zone[d][rng.random_range(0..by_zone[d].len())];
                out.push(Trip {
                    departure: start + Duration::seconds(rng.random_range(0..3600)),
                    origin_station: city.stations[so].0.clone(),
                    dest_station: city.stations[sd].0.clone(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::{generate_city, generate_weather};
    use super::*;
    use crate::features::trips_to_panel;

    fn run(c: &SynthConfig) -> (SynthCity, SynthWeather, Demand) {
        let city = generate_city(c).unwrap();
        let w = generate_weather(c).unwrap();
        let d = generate_demand(c, &city, &w).unwrap();
        (city, w, d)
    }

    #[test]
    fn dry_expected_totals_follow_profile() {
        let c = SynthConfig { rain_episode_rate: 0.0, beta: 0.0, days: 14, ..SynthConfig::default() };
        let (_, _, d) = run(&c);
        for (t, h) in d.truth.iter().enumerate() {
            let hour = t % 24;
            let weekend = h.ts.weekday().num_days_from_monday() >= 5;
            let p = if weekend { c.weekend_profile[hour] } else { c.weekday_profile[hour] };
            assert!((h.expected_total - c.base_rate * p).abs() < 1e-9 * c.base_rate);
            assert_eq!(h.rain, 1.0);
        }
    }

    #[test]
    fn rain_multiplier_value() {
        let c = SynthConfig { days: 60, ..SynthConfig::default() };
        let (_, w, d) = run(&c);
        let t = w.series.hr().iter().position(|&v| v > 0.0).unwrap();
        assert!((d.truth[t].rain - (-0.7 * w.series.hr()[t]).exp()).abs() < 1e-15);
        assert!(((-0.7f64).exp() - 0.4966).abs() < 1e-4);
    }

    #[test]
    fn poisson_mean_within_bound() {
        let mut rng = SynthConfig::default().rng(99);
        let lambda = 3.7;
        let p = Poisson::new(lambda).unwrap();
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - lambda).abs() <= 3.0 * (lambda / n as f64).sqrt());
    }

    #[test]
    fn rainy_hours_have_lower_demand() {
        let c = SynthConfig { days: 90, ..SynthConfig::default() };
        let (_, w, d) = run(&c);
        // compare observed totals normalized by their dry expectation
        let (mut rain_obs, mut rain_exp, mut dry_obs, mut dry_exp) = (0.0, 0.0, 0.0, 0.0);
        for (t, h) in d.truth.iter().enumerate() {
            let total: f64 = d.panel.hour_row(t).iter().map(|&v| v as f64).sum();
            let base = c.base_rate * h.profile * h.holiday;
            if w.series.hr()[t] > 0.0 {
                rain_obs += total;
                rain_exp += base;
            } else if h.recovery == 0.0 {
                dry_obs += total;
                dry_exp += base;
            }
        }
        let (rain_rate, dry_rate) = (rain_obs / rain_exp, dry_obs / dry_exp);
        let sigma = (rain_obs.sqrt() / rain_exp).hypot(dry_obs.sqrt() / dry_exp);
        assert!(rain_rate + 3.0 * sigma < dry_rate, "{rain_rate} vs {dry_rate}");
    }

    #[test]
    fn recovery_hour_boosted() {
        let c = SynthConfig { days: 60, ..SynthConfig::default() };
        let (_, w, d) = run(&c);
        let hr = w.series.hr();
        let t = (1..hr.len()).find(|&t| hr[t] == 0.0 && hr[t - 1] > 0.0).unwrap();
        assert!((d.truth[t].recovery - 0.5 * w.series.hd()[t - 1] / 60.0).abs() < 1e-15);
        let dry = c.base_rate * d.truth[t].profile * d.truth[t].holiday;
        assert!(d.truth[t].expected_total > dry);
    }

    #[test]
    fn trips_reproduce_panel() {
        let c = SynthConfig { days: 8, ..SynthConfig::default() };
        let (city, _, d) = run(&c);
        let trips = expand_trips(&c, &city, &d);
        assert_eq!(trips.len() as u64, d.panel.total());
        let rebuilt = trips_to_panel(&trips, &city.station_map(), &city.zone_ids(), *d.panel.grid()).unwrap();
        assert_eq!(rebuilt, d.panel);
    }

    #[test]
    fn deterministic() {
        let c = SynthConfig { days: 8, ..SynthConfig::default() };
        assert_eq!(run(&c).2, run(&c).2);
    }
}
