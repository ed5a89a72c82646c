use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::demand::expand_trips;
use super::{generate_all, Archetype, HourTruth, RainEpisode, SynthConfig, SynthError};
use crate::features::io::{write_calendar, write_loop_records, write_loop_zones, write_trips, write_weather};
use crate::geo::io::zones_to_geojson;

pub const TRUTH_FILE: &str = "truth.json";

/// Paths of the emitted files.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthFiles {
    pub zones: PathBuf,
    pub stations: PathBuf,
    pub trips: PathBuf,
    pub weather: PathBuf,
    pub calendar: PathBuf,
    pub loops: PathBuf,
    pub loop_zones: PathBuf,
    pub truth: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            zones: dir.join("zones.geojson"),
            stations: dir.join("stations.csv"),
            trips: dir.join("trips.csv"),
            weather: dir.join("weather.csv"),
            calendar: dir.join("calendar.csv"),
            loops: dir.join("loops.csv"),
            loop_zones: dir.join("loop_zones.csv"),
            truth: dir.join(TRUTH_FILE),
        }
    }

    pub fn all(&self) -> Vec<&Path> {
        vec![
            &self.zones,
            &self.stations,
            &self.trips,
            &self.weather,
            &self.calendar,
            &self.loops,
            &self.loop_zones,
            &self.truth,
        ]
    }
}

#[derive(Serialize)]
struct Truth<'a> {
    config: &'a SynthConfig,
    archetypes: BTreeMap<&'a str, Archetype>,
    station_zones: BTreeMap<&'a str, &'a str>,
    episodes: &'a [RainEpisode],
    corrupted_periods: usize,
    hours: &'a [HourTruth],
}

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Generates the city and writes every input file plus the ground-truth sidecar.
pub fn write_city(config: &SynthConfig, dir: &Path) -> Result<SynthFiles, SynthError> {
    let (city, weather, demand, flow) = generate_all(config)?;
    fs::create_dir_all(dir)?;
    let files = SynthFiles::in_dir(dir);

    let geo = serde_json::to_string_pretty(&zones_to_geojson(&city.zones)).expect("geojson serializes");
    fs::write(&files.zones, geo)?;

    let mut st = String::from("station_id,x,y\n");
    for (id, p) in &city.stations {
        st.push_str(&format!("{id},{},{}\n", p[0], p[1]));
    }
    fs::write(&files.stations, st)?;

    write_trips(create(&files.trips)?, &expand_trips(config, &city, &demand))?;
    write_weather(create(&files.weather)?, &weather.series)?;
    write_calendar(create(&files.calendar)?, &city.calendar)?;
    write_loop_records(create(&files.loops)?, &flow.records)?;
    write_loop_zones(create(&files.loop_zones)?, &flow.loop_zones)?;

    let truth = Truth {
        config,
        archetypes: city.zones.iter().map(|z| z.id.as_str()).zip(city.archetypes.iter().copied()).collect(),
        station_zones: city
            .stations
            .iter()
            .zip(&city.station_zone)
            .map(|((s, _), &z)| (s.as_str(), city.zones[z].id.as_str()))
            .collect(),
        episodes: &weather.episodes,
        corrupted_periods: flow.corrupted,
        hours: &demand.truth,
    };
    fs::write(&files.truth, serde_json::to_string_pretty(&truth).expect("truth serializes"))?;
    Ok(files)
}
