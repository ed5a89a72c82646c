use std::collections::HashMap;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SynthConfig, SynthError};
use crate::features::{CalendarFlags, CalendarTable};
use crate::geo::{Point, Polygon, Zone};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Residential,
    Business,
    Campus,
}

impl Archetype {
    /// Functionality template (residential, business, campus shares).
    pub fn template(self) -> [f64; 3] {
        match self {
            Archetype::Residential => [0.8, 0.15, 0.05],
            Archetype::Business => [0.1, 0.8, 0.1],
            Archetype::Campus => [0.1, 0.2, 0.7],
        }
    }

    /// (production, attraction) weights for a time-of-day phase:
    /// 0 = morning 6–10h, 1 = evening 16–20h, 2 = other hours.
    pub fn masses(self, phase: usize) -> (f64, f64) {
        match (self, phase) {
            (Archetype::Residential, 0) => (3.0, 0.5),
            (Archetype::Residential, 1) => (0.7, 3.0),
            (Archetype::Business, 0) => (0.5, 3.0),
            (Archetype::Business, 1) => (3.0, 0.5),
            (Archetype::Campus, 0) => (1.0, 2.0),
            (Archetype::Campus, 1) => (2.0, 1.0),
            (Archetype::Campus, _) => (1.5, 1.5),
            _ => (1.0, 1.0),
        }
    }
}

pub fn phase_of(hour: u32) -> usize {
    match hour {
        6..=10 => 0,
        16..=20 => 1,
        _ => 2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCity {
    /// Row-major grid zones, ids `z000`, `z001`, ...
    pub zones: Vec<Zone>,
    pub archetypes: Vec<Archetype>,
    /// Per-zone scale of production and attraction.
    pub size: Vec<f64>,
    pub stations: Vec<(String, Point)>,
    /// Zone index of each station, in `stations` order.
    pub station_zone: Vec<usize>,
    pub calendar: CalendarTable,
}

impl SynthCity {
    pub fn zone_ids(&self) -> Vec<String> {
        self.zones.iter().map(|z| z.id.clone()).collect()
    }

    /// Station id → zone id, as planted.
    pub fn station_map(&self) -> HashMap<String, String> {
        self.stations
            .iter()
            .zip(&self.station_zone)
            .map(|((s, _), &z)| (s.clone(), self.zones[z].id.clone()))
            .collect()
    }

    /// Stations of each zone.
    pub fn stations_by_zone(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.zones.len()];
        for (i, &z) in self.station_zone.iter().enumerate() {
            out[z].push(i);
        }
        out
    }
}

pub fn zone_id(index: usize) -> String {
    format!("z{index:03}")
}

pub fn generate_city(config: &SynthConfig) -> Result<SynthCity, SynthError> {
    config.validate()?;
    let mut rng = config.rng(1);
    let g = config.grid;
    let s = config.zone_size;
    let n = g * g;

    let mut archetypes = vec![Archetype::Residential; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for (k, &z) in order.iter().enumerate() {
        archetypes[z] = match k {
            0 => Archetype::Residential,
            1 => Archetype::Business,
            2 => Archetype::Campus,
            _ => match rng.random_range(0.0..1.0) {
                u if u < 0.5 => Archetype::Residential,
                u if u < 0.8 => Archetype::Business,
                _ => Archetype::Campus,
            },
        };
    }

    let mut zones = Vec::with_capacity(n);
    let mut size = Vec::with_capacity(n);
    let mut stations = Vec::new();
    let mut station_zone = Vec::new();
    for r in 0..g {
        for c in 0..g {
            let i = r * g + c;
            let (x0, y0) = (c as f64 * s, r as f64 * s);
            let ring = vec![[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s], [x0, y0]];
            let func: Vec<f64> = archetypes[i]
                .template()
                .iter()
                .map(|v| v + rng.random_range(0.0..0.1))
                .collect();
            zones.push(Zone::new(zone_id(i), vec![Polygon::new(ring, vec![])], Some(func))?);
            size.push(rng.random_range(0.5..1.5));
            for k in 0..config.stations_per_zone {
                let x = x0 + s * rng.random_range(0.05..0.95);
                let y = y0 + s * rng.random_range(0.05..0.95);
                stations.push((format!("s{i:03}_{k}"), [x, y]));
                station_zone.push(i);
            }
        }
    }

    Ok(SynthCity {
        zones,
        archetypes,
        size,
        stations,
        station_zone,
        calendar: build_calendar(config),
    })
}

fn build_calendar(config: &SynthConfig) -> CalendarTable {
    let mut table = CalendarTable::default();
    let first = config.start_date;
    let hol = config.holiday_start_day..config.holiday_start_day + config.holiday_days;
    let date = |d: usize| first + Duration::days(d as i64);
    for d in 0..config.days {
        let day: NaiveDate = date(d);
        let weekend = day.weekday().num_days_from_monday() >= 5;
        table.days.insert(
            day,
            CalendarFlags {
                business_day: !weekend,
                school_holiday: config.holiday_days > 0 && hol.contains(&d),
                holiday_departure: config.holiday_days > 0 && d + 1 == hol.start,
                holiday_return: config.holiday_days > 0 && d == hol.end,
            },
        );
    }
    table
}
