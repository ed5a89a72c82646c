//! CSV readers and writers for the raw inputs.
//!
//! | file     | header                                                                  |
//! |----------|-------------------------------------------------------------------------|
//! | trips    | `departure_ts,origin_station,dest_station`                              |
//! | loops    | `ts,loop_id,flow,occupancy` (empty cell = missing)                      |
//! | weather  | `ts,hr,hd` (empty cell = missing)                                       |
//! | calendar | `date,business_day,school_holiday,holiday_departure,holiday_return`     |
//! | loop map | `loop_id,zone_id`                                                       |
//! | flows    | `ts,zone_id,flow` (cleaned hourly zone flow)                            |
//!
//! Timestamps are ISO-8601 local time; flags accept `0/1` or `true/false`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::Deserialize;

use super::calendar::{CalendarFlags, CalendarTable};
use super::flow::{LoopRecord, ZoneFlowSeries};
use super::panel::Trip;
use super::time::{format_timestamp, parse_date, parse_timestamp, HourGrid};
use super::weather::WeatherSeries;
use super::FeatureError;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn csv_err(what: &str, e: csv::Error) -> FeatureError {
    FeatureError::Parse(format!("{what}: {e}"))
}

fn write_err(e: impl std::fmt::Display) -> FeatureError {
    FeatureError::Io(e.to_string())
}

fn parse_opt(field: &str, what: &str, line: u64) -> Result<Option<f64>, FeatureError> {
    if field.is_empty() || field.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| FeatureError::Parse(format!("{what} line {line}: bad number {field:?}")))
}

fn parse_flag(field: &str, what: &str, line: u64) -> Result<bool, FeatureError> {
    match field.to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(FeatureError::Parse(format!("{what} line {line}: bad flag {field:?}"))),
    }
}

#[derive(Deserialize)]
struct TripRow {
    departure_ts: String,
    origin_station: String,
    dest_station: String,
}

pub fn read_trips<R: Read>(r: R) -> Result<Vec<Trip>, FeatureError> {
    let mut out = Vec::new();
    for row in reader(r).deserialize::<TripRow>() {
        let row = row.map_err(|e| csv_err("trips", e))?;
        out.push(Trip {
            departure: parse_timestamp(&row.departure_ts)?,
            origin_station: row.origin_station,
            dest_station: row.dest_station,
        });
    }
    Ok(out)
}

pub fn write_trips<W: Write>(w: W, trips: &[Trip]) -> Result<(), FeatureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["departure_ts", "origin_station", "dest_station"])
        .map_err(write_err)?;
    for t in trips {
        wr.write_record([
            format_timestamp(t.departure).as_str(),
            &t.origin_station,
            &t.dest_station,
        ])
        .map_err(write_err)?;
    }
    wr.flush().map_err(write_err)
}

#[derive(Deserialize)]
struct LoopRow {
    ts: String,
    loop_id: String,
    flow: String,
    occupancy: String,
}

pub fn read_loop_records<R: Read>(r: R) -> Result<Vec<LoopRecord>, FeatureError> {
    let mut out = Vec::new();
    for (i, row) in reader(r).deserialize::<LoopRow>().enumerate() {
        let row = row.map_err(|e| csv_err("loops", e))?;
        let line = i as u64 + 2;
        out.push(LoopRecord {
            ts: parse_timestamp(&row.ts)?,
            loop_id: row.loop_id,
            flow: parse_opt(&row.flow, "loops", line)?,
            occupancy: parse_opt(&row.occupancy, "loops", line)?,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_loop_records<W: Write>(w: W, records: &[LoopRecord]) -> Result<(), FeatureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ts", "loop_id", "flow", "occupancy"])
        .map_err(write_err)?;
    for r in records {
        wr.write_record([
            format_timestamp(r.ts),
            r.loop_id.clone(),
            fmt_opt(r.flow),
            fmt_opt(r.occupancy),
        ])
        .map_err(write_err)?;
    }
    wr.flush().map_err(write_err)
}

#[derive(Deserialize)]
struct WeatherRow {
    ts: String,
    hr: String,
    hd: String,
}

/// Raw weather rows; feed to [`WeatherSeries::from_records`].
pub fn read_weather_records<R: Read>(
    r: R,
) -> Result<Vec<(NaiveDateTime, Option<f64>, Option<f64>)>, FeatureError> {
    let mut out = Vec::new();
    for (i, row) in reader(r).deserialize::<WeatherRow>().enumerate() {
        let row = row.map_err(|e| csv_err("weather", e))?;
        let line = i as u64 + 2;
        out.push((
            parse_timestamp(&row.ts)?,
            parse_opt(&row.hr, "weather", line)?,
            parse_opt(&row.hd, "weather", line)?,
        ));
    }
    Ok(out)
}

pub fn read_weather<R: Read>(r: R, grid: HourGrid) -> Result<WeatherSeries, FeatureError> {
    WeatherSeries::from_records(grid, &read_weather_records(r)?)
}

pub fn write_weather<W: Write>(w: W, weather: &WeatherSeries) -> Result<(), FeatureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ts", "hr", "hd"]).map_err(write_err)?;
    let grid = weather.grid();
    for t in 0..grid.len {
        wr.write_record([
            format_timestamp(grid.time(t)),
            weather.hr()[t].to_string(),
            weather.hd()[t].to_string(),
        ])
        .map_err(write_err)?;
    }
    wr.flush().map_err(write_err)
}

#[derive(Deserialize)]
struct CalendarRow {
    date: String,
    business_day: String,
    school_holiday: String,
    holiday_departure: String,
    holiday_return: String,
}

pub fn read_calendar<R: Read>(r: R) -> Result<CalendarTable, FeatureError> {
    let mut table = CalendarTable::default();
    for (i, row) in reader(r).deserialize::<CalendarRow>().enumerate() {
        let row = row.map_err(|e| csv_err("calendar", e))?;
        let line = i as u64 + 2;
        let flag = |s: &str| parse_flag(s, "calendar", line);
        table.days.insert(
            parse_date(&row.date)?,
            CalendarFlags {
                business_day: flag(&row.business_day)?,
                school_holiday: flag(&row.school_holiday)?,
                holiday_departure: flag(&row.holiday_departure)?,
                holiday_return: flag(&row.holiday_return)?,
            },
        );
    }
    Ok(table)
}

pub fn write_calendar<W: Write>(w: W, table: &CalendarTable) -> Result<(), FeatureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "date",
        "business_day",
        "school_holiday",
        "holiday_departure",
        "holiday_return",
    ])
    .map_err(write_err)?;
    let b = |x: bool| if x { "1" } else { "0" };
    for (d, f) in &table.days {
        wr.write_record([
            d.format("%Y-%m-%d").to_string().as_str(),
            b(f.business_day),
            b(f.school_holiday),
            b(f.holiday_departure),
            b(f.holiday_return),
        ])
        .map_err(write_err)?;
    }
    wr.flush().map_err(write_err)
}

#[derive(Deserialize)]
struct LoopZoneRow {
    loop_id: String,
    zone_id: String,
}

pub fn read_loop_zones<R: Read>(r: R) -> Result<BTreeMap<String, String>, FeatureError> {
    let mut out = BTreeMap::new();
    for row in reader(r).deserialize::<LoopZoneRow>() {
        let row = row.map_err(|e| csv_err("loop map", e))?;
        out.insert(row.loop_id, row.zone_id);
    }
    Ok(out)
}

pub fn write_loop_zones<W: Write>(w: W, map: &BTreeMap<String, String>) -> Result<(), FeatureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["loop_id", "zone_id"]).map_err(write_err)?;
    for (l, z) in map {
        wr.write_record([l, z]).map_err(write_err)?;
    }
    wr.flush().map_err(write_err)
}

#[derive(Deserialize)]
struct FlowRow {
    ts: String,
    zone_id: String,
    flow: f64,
}

/// Reads a cleaned zone-flow file onto `grid`; every zone must cover every hour.
pub fn read_zone_flows<R: Read>(r: R, grid: HourGrid) -> Result<ZoneFlowSeries, FeatureError> {
    let mut cells: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for row in reader(r).deserialize::<FlowRow>() {
        let row = row.map_err(|e| csv_err("zone flows", e))?;
        let ts = parse_timestamp(&row.ts)?;
        let t = grid.index_of(ts).ok_or(FeatureError::OutsideGrid(ts))?;
        cells.entry(row.zone_id).or_insert_with(|| vec![None; grid.len])[t] = Some(row.flow);
    }
    let mut flows = BTreeMap::new();
    for (zone, values) in cells {
        let full: Option<Vec<f64>> = values.into_iter().collect();
        let full = full.ok_or_else(|| FeatureError::ZonesWithoutFlow(vec![zone.clone()]))?;
        flows.insert(zone, full);
    }
    Ok(ZoneFlowSeries { grid, flows })
}

pub fn write_zone_flows<W: Write>(w: W, flows: &ZoneFlowSeries) -> Result<(), FeatureError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ts", "zone_id", "flow"]).map_err(write_err)?;
    for t in 0..flows.grid.len {
        let ts = format_timestamp(flows.grid.time(t));
        for (zone, values) in &flows.flows {
            wr.write_record([ts.as_str(), zone, &values[t].to_string()])
                .map_err(write_err)?;
        }
    }
    wr.flush().map_err(write_err)
}
