//! Zone files are GeoJSON `FeatureCollection`s restricted to `Polygon` and
//! `MultiPolygon` geometries in a projected planar CRS (metres). Each
//! feature carries `properties.id` and optionally `properties.functionality`
//! (array of numbers). Station files are CSV `station_id,x,y`.

use std::path::Path;

use serde_json::{json, Value};

use super::geometry::{dissolve, Point, Polygon};
use super::partition::{Zone, ZonePartition};
use super::stations::Station;
use super::GeoError;

pub fn parse_zones(text: &str) -> Result<Vec<Zone>, GeoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| GeoError::Parse(e.to_string()))?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoError::Parse("expected a FeatureCollection with `features`".into()))?;
    if features.is_empty() {
        return Err(GeoError::Empty);
    }
    features.iter().enumerate().map(|(i, f)| parse_feature(i, f)).collect()
}

fn parse_feature(index: usize, f: &Value) -> Result<Zone, GeoError> {
    let props = f.get("properties");
    let id = match props.and_then(|p| p.get("id")) {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(GeoError::Parse(format!("feature {index}: missing properties.id"))),
    };
    let functionality = match props.and_then(|p| p.get("functionality")) {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|v| {
                    v.as_f64().ok_or_else(|| {
                        GeoError::Parse(format!("zone {id}: functionality must be numeric"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => {
            return Err(GeoError::Parse(format!("zone {id}: functionality must be an array")))
        }
    };
    let geom = f
        .get("geometry")
        .ok_or_else(|| GeoError::Parse(format!("zone {id}: missing geometry")))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| GeoError::Parse(format!("zone {id}: missing coordinates")))?;
    let polygons = match geom.get("type").and_then(Value::as_str) {
        Some("Polygon") => vec![parse_polygon(&id, coords)?],
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| GeoError::Parse(format!("zone {id}: bad MultiPolygon")))?
            .iter()
            .map(|c| parse_polygon(&id, c))
            .collect::<Result<_, _>>()?,
        other => {
            return Err(GeoError::Parse(format!(
                "zone {id}: unsupported geometry type {other:?}"
            )))
        }
    };
    Zone::new(id, polygons, functionality)
}

fn parse_polygon(id: &str, v: &Value) -> Result<Polygon, GeoError> {
    let rings = v
        .as_array()
        .ok_or_else(|| GeoError::Parse(format!("zone {id}: polygon must be an array of rings")))?;
    let mut parsed = rings.iter().map(|r| parse_ring(id, r));
    let exterior = parsed
        .next()
        .ok_or_else(|| GeoError::Parse(format!("zone {id}: polygon without rings")))??;
    let holes = parsed.collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon::new(exterior, holes))
}

fn parse_ring(id: &str, v: &Value) -> Result<Vec<Point>, GeoError> {
    v.as_array()
        .ok_or_else(|| GeoError::Parse(format!("zone {id}: ring must be an array")))?
        .iter()
        .map(|p| match p.as_array().map(Vec::as_slice) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok([x, y]),
                _ => Err(GeoError::Parse(format!("zone {id}: non-numeric coordinate"))),
            },
            _ => Err(GeoError::Parse(format!("zone {id}: position needs two numbers"))),
        })
        .collect()
}

pub fn load_partition(path: &Path) -> Result<ZonePartition, GeoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GeoError::Io(format!("{}: {e}", path.display())))?;
    ZonePartition::from_zones(parse_zones(&text)?)
}

fn polygon_json(p: &Polygon) -> Value {
    Value::Array(p.rings().map(|r| json!(r)).collect())
}

/// Serialises the partition; merged zones are written with interior
/// boundaries dissolved.
pub fn partition_to_geojson(partition: &ZonePartition) -> Value {
    let features: Vec<Value> = partition
        .zones()
        .map(|z| {
            let polys = dissolve(&z.polygons, partition.tolerance())
                .unwrap_or_else(|| z.polygons.clone());
            let mut props = json!({
                "id": z.id,
                "surface": z.surface,
                "members": z.members,
            });
            if let Some(f) = &z.functionality {
                props["functionality"] = json!(f);
            }
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": {
                    "type": "MultiPolygon",
                    "coordinates": polys.iter().map(polygon_json).collect::<Vec<_>>(),
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn zones_to_geojson(zones: &[Zone]) -> Value {
    let features: Vec<Value> = zones
        .iter()
        .map(|z| {
            let mut props = json!({ "id": z.id });
            if let Some(f) = &z.functionality {
                props["functionality"] = json!(f);
            }
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": {
                    "type": "Polygon",
                    "coordinates": polygon_json(&z.polygons[0]),
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// Merge-tree sidecar: one entry per merge plus the final composition.
pub fn merge_tree(partition: &ZonePartition) -> Value {
    json!({
        "merges": partition.merges(),
        "zones": partition
            .zones()
            .map(|z| json!({ "id": z.id, "members": z.members, "surface": z.surface }))
            .collect::<Vec<_>>(),
    })
}

pub fn read_station_locations(path: &Path) -> Result<Vec<(String, Point)>, GeoError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| GeoError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| GeoError::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let x: f64 = field(1)
            .parse()
            .map_err(|_| GeoError::Parse(format!("station {}: bad x", field(0))))?;
        let y: f64 = field(2)
            .parse()
            .map_err(|_| GeoError::Parse(format!("station {}: bad y", field(0))))?;
        out.push((field(0).to_string(), [x, y]));
    }
    Ok(out)
}

pub fn write_station_assignment(stations: &[Station]) -> String {
    let mut s = String::from("station_id,x,y,zone_id\n");
    for st in stations {
        s.push_str(&format!(
            "{},{},{},{}\n",
            st.id, st.location[0], st.location[1], st.zone_id
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::partition::tests::grid;

    #[test]
    fn round_trip_through_geojson() {
        let p = grid(3);
        let text = zones_to_geojson(&p.zones().cloned().collect::<Vec<_>>()).to_string();
        let back = ZonePartition::from_zones(parse_zones(&text).unwrap()).unwrap();
        assert_eq!(back.adjacency(), p.adjacency());
    }

    #[test]
    fn aggregated_export_reloads_with_same_adjacency() {
        let agg = grid(3).aggregate_to(4).unwrap();
        let text = partition_to_geojson(&agg).to_string();
        let back = ZonePartition::from_zones(parse_zones(&text).unwrap()).unwrap();
        assert_eq!(back.zone_ids(), agg.zone_ids());
        for (pair, p) in agg.adjacency() {
            let q = back.shared_perimeter(&pair.0, &pair.1).unwrap();
            assert!((p - q).abs() < 1e-9);
        }
        assert!((back.total_surface() - 9.0).abs() < 1e-9);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            parse_zones(r#"{"type":"FeatureCollection","features":[]}"#).unwrap_err(),
            GeoError::Empty
        );
        let open_ring = r#"{"features":[{"properties":{"id":"a"},"geometry":{"type":"Polygon",
            "coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]}"#;
        assert!(matches!(
            parse_zones(open_ring).unwrap_err(),
            GeoError::InvalidRing { .. }
        ));
    }
}
