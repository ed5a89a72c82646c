use serde::{Deserialize, Serialize};

use super::geometry::Point;
use super::partition::ZonePartition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub location: Point,
    pub zone_id: String,
}

/// Assigns each `(id, location)` to a zone.
///
/// A station inside (or on the boundary of) several zones goes to the smallest
/// zone id. A station outside every zone goes to the zone with the nearest
/// boundary, again preferring the smaller id on ties.
pub fn assign_stations(partition: &ZonePartition, stations: &[(String, Point)]) -> Vec<Station> {
    let tol = partition.tolerance();
    stations
        .iter()
        .map(|(id, p)| {
            let mut containing = None;
            let mut nearest: Option<(&str, f64)> = None;
            // zones() iterates in ascending id order
            for z in partition.zones() {
                let d = z.boundary_distance(*p);
                if d <= tol || z.contains(*p) {
                    containing = Some(z.id.as_str());
                    break;
                }
                if nearest.is_none_or(|(_, best)| d < best) {
                    nearest = Some((z.id.as_str(), d));
                }
            }
            let zone = containing
                .or(nearest.map(|(z, _)| z))
                .expect("partition is never empty");
            Station {
                id: id.clone(),
                location: *p,
                zone_id: zone.to_string(),
            }
        })
        .collect()
}
