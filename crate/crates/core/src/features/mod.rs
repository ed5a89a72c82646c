//! Demand panels, context signals, calendar encodings and per-hour feature
//! matrices.

pub mod assemble;
pub mod calendar;
pub mod flow;
pub mod io;
pub mod panel;
pub mod spec;
pub mod time;
pub mod weather;

use chrono::{NaiveDate, NaiveDateTime};

pub use assemble::{assemble_features, FeatureMatrix, Standardizer};
pub use calendar::{
    encode_calendar, hour_class, CalendarEncoding, CalendarFlags, CalendarTable, CALENDAR_CLASSES,
    CALENDAR_FEATURES,
};
pub use flow::{aggregate_flow_by_zone, clean_loop_data, interpolate_gaps, LoopHourly, LoopRecord, ZoneFlowSeries};
pub use panel::{all_od_pairs, filter_top_ods, first_lagged_index, trips_to_panel, ODDemandPanel, Trip, LAG_OFFSETS};
pub use spec::{FeatureSpec, Variant};
pub use time::{format_timestamp, parse_date, parse_timestamp, truncate_to_hour, HourGrid};
pub use weather::{WeatherSeries, WeatherSignal};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unknown OD pair {0}")]
    UnknownOd(String),
    #[error("lags unavailable at {requested}; the earliest valid timestamp is {earliest}")]
    InsufficientHistory {
        requested: NaiveDateTime,
        earliest: NaiveDateTime,
    },
    #[error("unknown station {0:?}")]
    UnknownStation(String),
    #[error("timestamp {0} lies outside the hour grid")]
    OutsideGrid(NaiveDateTime),
    #[error("p_bike must be in (0, 1], got {0}")]
    InvalidShare(f64),
    #[error("panel has no demand in the selection window")]
    NoDemand,
    #[error("loop {0:?} has no zone in the loop map")]
    UnmappedLoop(String),
    #[error("zones without any loop flow over the horizon: {}", .0.join(", "))]
    ZonesWithoutFlow(Vec<String>),
    #[error("invalid weather at {ts}: hr={hr}, hd={hd}")]
    InvalidWeather { ts: NaiveDateTime, hr: f64, hd: f64 },
    #[error("weather file has no usable values")]
    NoWeather,
    #[error("calendar feature {feature}: class {class} out of range")]
    OneHot { feature: usize, class: usize },
    #[error("date {0} is not covered by the calendar table")]
    DateNotInCalendar(NaiveDate),
    #[error("unknown variant {name:?}; valid variants: {}", .valid.join(", "))]
    UnknownVariant { name: String, valid: Vec<String> },
    #[error("missing {signal} value at {ts}")]
    MissingOffset { signal: String, ts: NaiveDateTime },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}
