use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::geometry::{shared_boundary, BBox, Point, Polygon};
use super::GeoError;

/// A zone of the partition. Aggregated zones keep their members' original
/// polygons; the surface is the sum of member surfaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub polygons: Vec<Polygon>,
    pub surface: f64,
    pub centroid: Point,
    pub functionality: Option<Vec<f64>>,
    /// Ids of the original zones composing this one (sorted).
    pub members: Vec<String>,
}

impl Zone {
    pub fn new(id: impl Into<String>, polygons: Vec<Polygon>, functionality: Option<Vec<f64>>) -> Result<Self, GeoError> {
        let id = id.into();
        let mut normalized = Vec::with_capacity(polygons.len());
        for p in polygons {
            p.validate().map_err(|defect| GeoError::InvalidRing {
                zone: id.clone(),
                defect: defect.to_string(),
            })?;
            normalized.push(p.normalized());
        }
        let (mut cx, mut cy, mut surface) = (0.0, 0.0, 0.0);
        for p in &normalized {
            let (c, a) = p.centroid();
            cx += c[0] * a;
            cy += c[1] * a;
            surface += a;
        }
        if !(surface > 0.0) {
            return Err(GeoError::InvalidRing {
                zone: id,
                defect: "non-positive surface".into(),
            });
        }
        Ok(Self {
            members: vec![id.clone()],
            id,
            polygons: normalized,
            surface,
            centroid: [cx / surface, cy / surface],
            functionality,
        })
    }

    pub fn bbox(&self) -> BBox {
        self.polygons
            .iter()
            .map(Polygon::bbox)
            .reduce(|a, b| a.union(&b))
            .expect("zone has at least one polygon")
    }

    pub fn contains(&self, p: Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.polygons
            .iter()
            .map(|poly| poly.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One greedy merge step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub step: usize,
    /// Id kept by the merged zone (the smaller of the two).
    pub kept: String,
    pub absorbed: String,
    pub objective: f64,
    pub members: Vec<String>,
}

/// Unordered zone pair stored with `a < b`.
pub type ZonePair = (String, String);

fn ordered(a: &str, b: &str) -> ZonePair {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZonePartition {
    zones: BTreeMap<String, Zone>,
    /// Shared perimeter (m) per adjacent pair; every value is > 0.
    adjacency: BTreeMap<ZonePair, f64>,
    merges: Vec<MergeEvent>,
    tolerance: f64,
}

impl ZonePartition {
    /// Builds a partition and computes adjacency from shared boundaries.
    /// Two zones are adjacent iff they share a boundary stretch of positive length.
    pub fn from_zones(zones: Vec<Zone>) -> Result<Self, GeoError> {
        if zones.is_empty() {
            return Err(GeoError::Empty);
        }
        let mut map = BTreeMap::new();
        for z in zones {
            if map.contains_key(&z.id) {
                return Err(GeoError::DuplicateZone(z.id));
            }
            map.insert(z.id.clone(), z);
        }
        let extent = map
            .values()
            .map(Zone::bbox)
            .reduce(|a, b| a.union(&b))
            .map_or(1.0, |b| b.extent());
        let tolerance = 1e-9 * extent.max(1.0);

        let entries: Vec<(&String, &Zone, BBox)> =
            map.iter().map(|(k, z)| (k, z, z.bbox())).collect();
        let mut adjacency = BTreeMap::new();
        for (i, (ida, za, ba)) in entries.iter().enumerate() {
            for (idb, zb, bb) in &entries[i + 1..] {
                if !ba.intersects(bb, tolerance) {
                    continue;
                }
                let p = shared_boundary(&za.polygons, &zb.polygons, tolerance);
                if p > 0.0 {
                    adjacency.insert(ordered(ida, idb), p);
                }
            }
        }
        Ok(Self {
            zones: map,
            adjacency,
            merges: Vec::new(),
            tolerance,
        })
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }

    /// Zones in ascending id order.
    pub fn zones(&self) -> impl Iterator<Item = &Zone> {
        self.zones.values()
    }

    pub fn zone_ids(&self) -> Vec<String> {
        self.zones.keys().cloned().collect()
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.get(id)
    }

    pub fn adjacency(&self) -> &BTreeMap<ZonePair, f64> {
        &self.adjacency
    }

    pub fn merges(&self) -> &[MergeEvent] {
        &self.merges
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn total_surface(&self) -> f64 {
        self.zones.values().map(|z| z.surface).sum()
    }

    pub fn shared_perimeter(&self, a: &str, b: &str) -> Option<f64> {
        self.adjacency.get(&ordered(a, b)).copied()
    }

    pub fn are_adjacent(&self, a: &str, b: &str) -> bool {
        self.shared_perimeter(a, b).is_some()
    }

    pub fn neighbors(&self, id: &str) -> Vec<&str> {
        self.adjacency
            .keys()
            .filter_map(|(a, b)| {
                if a == id {
                    Some(b.as_str())
                } else if b == id {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect()
    }

    /// `(s_i + s_j) / P_ij` for an adjacent pair.
    pub fn merge_objective(&self, a: &str, b: &str) -> Result<f64, GeoError> {
        let za = self.zones.get(a).ok_or_else(|| GeoError::UnknownZone(a.to_string()))?;
        let zb = self.zones.get(b).ok_or_else(|| GeoError::UnknownZone(b.to_string()))?;
        let p = self
            .shared_perimeter(a, b)
            .ok_or_else(|| GeoError::NotAdjacent(a.to_string(), b.to_string()))?;
        Ok((za.surface + zb.surface) / p)
    }

    /// Adjacent pair minimising the merge objective; ties go to the
    /// lexicographically smallest `(id_a, id_b)`.
    pub fn best_merge(&self) -> Option<(ZonePair, f64)> {
        let mut best: Option<(&ZonePair, f64)> = None;
        for (pair, p) in &self.adjacency {
            let obj = (self.zones[&pair.0].surface + self.zones[&pair.1].surface) / p;
            // map iterates in lexicographic order, so strict < keeps the first tie
            if best.is_none_or(|(_, b)| obj < b) {
                best = Some((pair, obj));
            }
        }
        best.map(|(pair, obj)| (pair.clone(), obj))
    }

    /// Merges zones `a` and `b`. The merged zone keeps the smaller id; its
    /// perimeter with each neighbour is the sum of the members' perimeters.
    pub fn merge(&mut self, a: &str, b: &str) -> Result<MergeEvent, GeoError> {
        let objective = self.merge_objective(a, b)?;
        let (kept_id, absorbed_id) = ordered(a, b);
        let absorbed = self.zones.remove(&absorbed_id).expect("checked above");
        let kept = self.zones.get_mut(&kept_id).expect("checked above");

        let total = kept.surface + absorbed.surface;
        kept.centroid = [
            (kept.centroid[0] * kept.surface + absorbed.centroid[0] * absorbed.surface) / total,
            (kept.centroid[1] * kept.surface + absorbed.centroid[1] * absorbed.surface) / total,
        ];
        kept.functionality = match (kept.functionality.take(), &absorbed.functionality) {
            (Some(fa), Some(fb)) if fa.len() == fb.len() => Some(
                fa.iter()
                    .zip(fb)
                    .map(|(x, y)| (x * kept.surface + y * absorbed.surface) / total)
                    .collect(),
            ),
            (Some(_), Some(_)) => {
                return Err(GeoError::FunctionalityLength {
                    zone: absorbed_id,
                })
            }
            (fa, fb) => fa.or_else(|| fb.clone()),
        };
        kept.surface = total;
        kept.polygons.extend(absorbed.polygons);
        kept.members.extend(absorbed.members);
        kept.members.sort();
        let members = kept.members.clone();

        let mut rewired: BTreeMap<String, f64> = BTreeMap::new();
        let old = std::mem::take(&mut self.adjacency);
        for ((x, y), p) in old {
            let touches_kept = x == kept_id || y == kept_id;
            let touches_absorbed = x == absorbed_id || y == absorbed_id;
            if touches_kept && touches_absorbed {
                continue;
            }
            if touches_kept || touches_absorbed {
                let other = if x == kept_id || x == absorbed_id { y } else { x };
                *rewired.entry(other).or_default() += p;
            } else {
                self.adjacency.insert((x, y), p);
            }
        }
        for (other, p) in rewired {
            self.adjacency.insert(ordered(&kept_id, &other), p);
        }

        let event = MergeEvent {
            step: self.merges.len() + 1,
            kept: kept_id,
            absorbed: absorbed_id,
            objective,
            members,
        };
        self.merges.push(event.clone());
        Ok(event)
    }

    /// Greedily merges the best adjacent pair until `target` zones remain.
    pub fn aggregate_to(&self, target: usize) -> Result<ZonePartition, GeoError> {
        if target == 0 || target > self.len() {
            return Err(GeoError::BadTarget {
                target,
                current: self.len(),
            });
        }
        let mut out = self.clone();
        while out.len() > target {
            let Some(((a, b), _)) = out.best_merge() else {
                return Err(GeoError::Disconnected {
                    target,
                    minimum: out.len(),
                });
            };
            out.merge(&a, &b)?;
        }
        Ok(out)
    }

    /// Number of connected components of the adjacency graph.
    pub fn component_count(&self) -> usize {
        let ids: Vec<&String> = self.zones.keys().collect();
        let mut seen = BTreeSet::new();
        let mut count = 0;
        for id in ids {
            if seen.contains(id.as_str()) {
                continue;
            }
            count += 1;
            let mut stack = vec![id.as_str()];
            while let Some(cur) = stack.pop() {
                if !seen.insert(cur.to_string()) {
                    continue;
                }
                stack.extend(self.neighbors(cur));
            }
        }
        count
    }
}
