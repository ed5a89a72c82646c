//! Seeded synthetic city: grid zones, stations, calendar, rain, bike demand
//! with known weather coupling, and loop-detector car flow.

mod city;
mod demand;
mod flow;
mod output;
mod weather;

pub use city::{generate_city, Archetype, SynthCity};
pub use demand::{expand_trips, generate_demand, Demand, HourTruth};
pub use flow::{generate_flow, FlowOutput};
pub use output::{write_city, SynthFiles, TRUTH_FILE};
pub use weather::{generate_weather, RainEpisode, SynthWeather};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const WEEKDAY_PROFILE: [f64; 24] = [
    0.1, 0.05, 0.03, 0.03, 0.05, 0.2, 0.6, 1.4, 2.0, 1.2, 0.8, 0.9, 1.1, 1.0, 0.9, 1.0, 1.4, 2.0, 1.8, 1.2, 0.8,
    0.6, 0.4, 0.2,
];
pub const WEEKEND_PROFILE: [f64; 24] = [
    0.2, 0.15, 0.1, 0.05, 0.05, 0.1, 0.2, 0.4, 0.6, 0.9, 1.2, 1.4, 1.5, 1.5, 1.5, 1.4, 1.3, 1.2, 1.0, 0.8, 0.6,
    0.5, 0.4, 0.3,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Zones per side of the square grid.
    pub grid: usize,
    /// Zone side length in metres.
    pub zone_size: f64,
    pub stations_per_zone: usize,
    pub start_date: NaiveDate,
    pub days: usize,
    /// Distance-decay exponent of the gravity model.
    pub gravity_exponent: f64,
    /// Expected city-wide trips per hour where the profile equals 1.
    pub base_rate: f64,
    pub weekday_profile: Vec<f64>,
    pub weekend_profile: Vec<f64>,
    /// Demand multiplier on school-holiday days.
    pub holiday_damping: f64,
    /// First day (offset from `start_date`) of the school-holiday block.
    pub holiday_start_day: usize,
    pub holiday_days: usize,
    /// Rain episodes per day (Poisson).
    pub rain_episode_rate: f64,
    /// Mean episode length in hours (exponential).
    pub rain_mean_hours: f64,
    /// Mean episode intensity in mm/h (exponential).
    pub rain_mean_intensity: f64,
    /// Rain suppression: demand is multiplied by `exp(-beta * hr)`.
    pub beta: f64,
    /// Share of the previous hour's suppressed demand recovered in the first
    /// dry hour, scaled by that hour's rain minutes / 60.
    pub recovery_share: f64,
    /// Extra vehicles per suppressed bike trip leaving a zone.
    pub substitution: f64,
    /// Mean hourly vehicles per zone where the profile equals 1.
    pub flow_baseline: f64,
    /// Relative standard deviation of the zone flow noise.
    pub flow_noise: f64,
    pub loops_per_zone: usize,
    /// Fraction of 6-minute loop periods corrupted.
    pub corrupted_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: 5,
            zone_size: 1000.0,
            stations_per_zone: 2,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 7).expect("valid date"),
            days: 42,
            gravity_exponent: 1.5,
            base_rate: 150.0,
            weekday_profile: WEEKDAY_PROFILE.to_vec(),
            weekend_profile: WEEKEND_PROFILE.to_vec(),
            holiday_damping: 0.75,
            holiday_start_day: 14,
            holiday_days: 9,
            rain_episode_rate: 0.3,
            rain_mean_hours: 3.0,
            rain_mean_intensity: 1.5,
            beta: 0.7,
            recovery_share: 0.5,
            substitution: 0.3,
            flow_baseline: 300.0,
            flow_noise: 0.05,
            loops_per_zone: 2,
            corrupted_fraction: 0.02,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Every problem found, as `(key, message)`.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut err = |k: &str, m: String| out.push((k.to_string(), m));
        if self.grid < 2 {
            err("grid", format!("need at least 2 zones per side, got {}", self.grid));
        }
        if self.stations_per_zone == 0 {
            err("stations_per_zone", "must be at least 1".into());
        }
        if self.days == 0 {
            err("days", "must be at least 1".into());
        }
        if self.loops_per_zone == 0 {
            err("loops_per_zone", "must be at least 1".into());
        }
        for (k, v) in [
            ("zone_size", self.zone_size),
            ("rain_mean_hours", self.rain_mean_hours),
            ("rain_mean_intensity", self.rain_mean_intensity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                err(k, format!("must be positive, got {v}"));
            }
        }
        for (k, v) in [
            ("gravity_exponent", self.gravity_exponent),
            ("base_rate", self.base_rate),
            ("holiday_damping", self.holiday_damping),
            ("rain_episode_rate", self.rain_episode_rate),
            ("beta", self.beta),
            ("recovery_share", self.recovery_share),
            ("substitution", self.substitution),
            ("flow_baseline", self.flow_baseline),
            ("flow_noise", self.flow_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                err(k, format!("must be >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.corrupted_fraction) {
            err("corrupted_fraction", format!("must lie in [0, 1], got {}", self.corrupted_fraction));
        }
        for (k, p) in [("weekday_profile", &self.weekday_profile), ("weekend_profile", &self.weekend_profile)] {
            if p.len() != 24 {
                err(k, format!("needs 24 hourly values, got {}", p.len()));
            } else if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                err(k, "values must be >= 0".into());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Config(
                problems.into_iter().map(|(k, m)| format!("{k}: {m}")).collect::<Vec<_>>().join("; "),
            ))
        }
    }

    pub fn hours(&self) -> usize {
        self.days * 24
    }

    /// Independent generator stream `k` of this seed.
    pub(crate) fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Geo(#[from] crate::geo::GeoError),
    #[error(transparent)]
    Feature(#[from] crate::features::FeatureError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// All four generators in order.
pub fn generate_all(config: &SynthConfig) -> Result<(SynthCity, SynthWeather, Demand, FlowOutput), SynthError> {
    config.validate()?;
    let city = generate_city(config)?;
    let weather = generate_weather(config)?;
    let demand = generate_demand(config, &city, &weather)?;
    let flow = generate_flow(config, &city, &weather, &demand)?;
    Ok((city, weather, demand, flow))
}
