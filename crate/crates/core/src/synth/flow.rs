use std::collections::BTreeMap;

use chrono::Duration;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Demand, SynthCity, SynthConfig, SynthError, SynthWeather};
use crate::features::LoopRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOutput {
    /// Six-minute records, loop-major then time.
    pub records: Vec<LoopRecord>,
    /// Loop id → zone id.
    pub loop_zones: BTreeMap<String, String>,
    /// True hourly vehicle flow per `[zone][hour]`.
    pub zone_flow: Vec<Vec<f64>>,
    /// Number of corrupted periods.
    pub corrupted: usize,
}

pub const PERIODS: usize = 10;

/// Zone flow = baseline × size × calendar profile + substitution × suppressed
/// bike trips + Gaussian noise, split evenly over the zone's loops and the ten
/// periods of each hour.
pub fn generate_flow(
    config: &SynthConfig,
    city: &SynthCity,
    weather: &SynthWeather,
    demand: &Demand,
) -> Result<FlowOutput, SynthError> {
    config.validate()?;
    let mut rng = config.rng(5);
    let grid = *weather.series.grid();
    let n = city.zones.len();
    let loops = config.loops_per_zone;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut zone_flow = vec![vec![0.0; grid.len]; n];
    for t in 0..grid.len {
        let h = &demand.truth[t];
        for z in 0..n {
            let base = config.flow_baseline * city.size[z] * h.profile * h.holiday;
            let noise = config.flow_noise * base * std_normal.sample(&mut rng);
            zone_flow[z][t] = (base + config.substitution * demand.suppressed[t][z] + noise).max(0.0);
        }
    }

    let mut records = Vec::with_capacity(n * loops * grid.len * PERIODS);
    let mut loop_zones = BTreeMap::new();
    let mut corrupted = 0;
    for (z, zone) in city.zones.iter().enumerate() {
        for k in 0..loops {
            let id = format!("L{}_{k}", zone.id);
            loop_zones.insert(id.clone(), zone.id.clone());
            for (t, &f) in zone_flow[z].iter().enumerate() {
                let per = f / (loops * PERIODS) as f64;
                let start = grid.time(t);
                for p in 0..PERIODS {
                    let mut flow = Some(per);
                    let mut occupancy = Some((5.0 + 0.1 * per).min(45.0));
                    if config.corrupted_fraction > 0.0 && rng.random_range(0.0..1.0) < config.corrupted_fraction {
                        corrupted += 1;
                        if rng.random_range(0..2) == 0 {
                            occupancy = Some(80.0);
                        } else {
                            flow = None;
                        }
                    }
                    records.push(LoopRecord {
                        ts: start + Duration::minutes(6 * p as i64),
                        loop_id: id.clone(),
                        flow,
                        occupancy,
                    });
                }
            }
        }
    }
    Ok(FlowOutput {
        records,
        loop_zones,
        zone_flow,
        corrupted,
    })
}
