//! Zone polygons, shared perimeters and greedy pairwise aggregation.
//!
//! Coordinates must be in a projected planar CRS in metres; no reprojection
//! is done here.

pub mod geometry;
pub mod io;
mod partition;
mod stations;

pub use geometry::{Point, Polygon};
pub use io::{load_partition, merge_tree, parse_zones, partition_to_geojson};
pub use partition::{MergeEvent, Zone, ZonePair, ZonePartition};
pub use stations::{assign_stations, Station};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("zone file contains no zones")]
    Empty,
    #[error("duplicate zone id {0:?}")]
    DuplicateZone(String),
    #[error("zone {zone:?}: invalid ring ({defect})")]
    InvalidRing { zone: String, defect: String },
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("zones {0:?} and {1:?} are not adjacent")]
    NotAdjacent(String, String),
    #[error("cannot aggregate to {target} zones: the territory has disconnected parts, {minimum} zones is the achievable minimum")]
    Disconnected { target: usize, minimum: usize },
    #[error("target of {target} zones must be between 1 and the current count {current}")]
    BadTarget { target: usize, current: usize },
    #[error("zone {zone:?}: functionality vector length differs from its neighbour")]
    FunctionalityLength { zone: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}
