//! Planar polygon primitives. Rings are closed (`first == last`).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

/// One polygon: an exterior ring plus zero or more holes.
///
/// After [`Polygon::normalized`] the exterior is counter-clockwise and
/// holes are clockwise, so the interior always lies left of every edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    pub holes: Vec<Vec<Point>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of(points: impl IntoIterator<Item = Point>) -> Self {
        let mut b = BBox {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for p in points {
            b.min[0] = b.min[0].min(p[0]);
            b.min[1] = b.min[1].min(p[1]);
            b.max[0] = b.max[0].max(p[0]);
            b.max[1] = b.max[1].max(p[1]);
        }
        b
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn intersects(&self, other: &BBox, tol: f64) -> bool {
        self.min[0] <= other.max[0] + tol
            && other.min[0] <= self.max[0] + tol
            && self.min[1] <= other.max[1] + tol
            && other.min[1] <= self.max[1] + tol
    }

    pub fn extent(&self) -> f64 {
        (self.max[0] - self.min[0]).max(self.max[1] - self.min[1])
    }
}

/// Why a ring was rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RingDefect {
    TooFewPoints,
    NotClosed,
    ZeroArea,
    SelfIntersecting,
    NonFinite,
}

impl std::fmt::Display for RingDefect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RingDefect::TooFewPoints => "fewer than 4 positions",
            RingDefect::NotClosed => "first and last positions differ",
            RingDefect::ZeroArea => "zero area",
            RingDefect::SelfIntersecting => "self-intersecting",
            RingDefect::NonFinite => "non-finite coordinate",
        };
        f.write_str(s)
    }
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    ring.windows(2)
        .map(|w| w[0][0] * w[1][1] - w[1][0] * w[0][1])
        .sum::<f64>()
        / 2.0
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test (touching counts).
fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

pub fn validate_ring(ring: &[Point]) -> Result<(), RingDefect> {
    if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(RingDefect::NonFinite);
    }
    if ring.len() < 4 {
        return Err(RingDefect::TooFewPoints);
    }
    if ring.first() != ring.last() {
        return Err(RingDefect::NotClosed);
    }
    let n = ring.len() - 1;
    for i in 0..n {
        for j in i + 1..n {
            // consecutive edges share a vertex legitimately
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return Err(RingDefect::SelfIntersecting);
            }
        }
    }
    if signed_area(ring) == 0.0 {
        return Err(RingDefect::ZeroArea);
    }
    Ok(())
}

impl Polygon {
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Self {
        Self { exterior, holes }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    pub fn validate(&self) -> Result<(), RingDefect> {
        self.rings().try_for_each(|r| validate_ring(r))
    }

    /// Orients the exterior counter-clockwise and holes clockwise.
    pub fn normalized(mut self) -> Self {
        if signed_area(&self.exterior) < 0.0 {
            self.exterior.reverse();
        }
        for h in &mut self.holes {
            if signed_area(h) > 0.0 {
                h.reverse();
            }
        }
        self
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.exterior).abs() - self.holes.iter().map(|h| signed_area(h).abs()).sum::<f64>()
    }

    /// Area-weighted centroid; also returns the area used as weight.
    pub fn centroid(&self) -> (Point, f64) {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut total = 0.0;
        for (k, ring) in self.rings().enumerate() {
            let a = signed_area(ring);
            // exterior counts positive, holes negative, regardless of orientation
            let sign = if k == 0 { 1.0 } else { -1.0 };
            let mut rx = 0.0;
            let mut ry = 0.0;
            for w in ring.windows(2) {
                let c = w[0][0] * w[1][1] - w[1][0] * w[0][1];
                rx += (w[0][0] + w[1][0]) * c;
                ry += (w[0][1] + w[1][1]) * c;
            }
            // rx / (6a) is the ring centroid; weight by |a|
            cx += sign * rx / 6.0 * a.signum();
            cy += sign * ry / 6.0 * a.signum();
            total += sign * a.abs();
        }
        ([cx / total, cy / total], total)
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(self.exterior.iter().copied())
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings()
            .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
    }

    /// Even-odd containment test; points on the boundary may go either way.
    pub fn contains(&self, p: Point) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }

    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn ring_contains(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let qx = a[0] + t * dx - p[0];
    let qy = a[1] + t * dy - p[1];
    (qx * qx + qy * qy).sqrt()
}

/// Length over which two segments run along each other (0 for crossings and
/// point contacts).
pub fn collinear_overlap(a: Point, b: Point, c: Point, d: Point, tol: f64) -> f64 {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if len <= tol {
        return 0.0;
    }
    let u = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    let perp = |p: Point| (u[0] * (p[1] - a[1]) - u[1] * (p[0] - a[0])).abs();
    if perp(c) > tol || perp(d) > tol {
        return 0.0;
    }
    let proj = |p: Point| u[0] * (p[0] - a[0]) + u[1] * (p[1] - a[1]);
    let (tc, td) = (proj(c), proj(d));
    let overlap = len.min(tc.max(td)) - 0.0f64.max(tc.min(td));
    if overlap > tol {
        overlap
    } else {
        0.0
    }
}

/// Total length of boundary shared by two polygon sets.
pub fn shared_boundary(a: &[Polygon], b: &[Polygon], tol: f64) -> f64 {
    let mut total = 0.0;
    for pa in a {
        let ba = pa.bbox();
        for pb in b {
            if !ba.intersects(&pb.bbox(), tol) {
                continue;
            }
            for (p, q) in pa.edges() {
                let eb = BBox::of([p, q]);
                for (r, s) in pb.edges() {
                    if !eb.intersects(&BBox::of([r, s]), tol) {
                        continue;
                    }
                    total += collinear_overlap(p, q, r, s, tol);
                }
            }
        }
    }
    total
}

fn key(p: Point) -> (u64, u64) {
    // +0.0 and -0.0 compare equal but differ in bits
    let norm = |v: f64| if v == 0.0 { 0.0f64 } else { v };
    (norm(p[0]).to_bits(), norm(p[1]).to_bits())
}

/// Merges adjacent polygons into outer rings with their interior boundaries
/// removed. Inputs must be normalized and must not overlap. Returns `None`
/// when the boundary cannot be re-chained into closed rings.
pub fn dissolve(polygons: &[Polygon], tol: f64) -> Option<Vec<Polygon>> {
    if polygons.len() == 1 {
        return Some(polygons.to_vec());
    }
    let vertices: Vec<Point> = polygons
        .iter()
        .flat_map(|p| p.rings().flat_map(|r| r.iter().copied()))
        .collect();

    // split every edge at foreign vertices lying on it
    let mut edges: Vec<(Point, Point)> = Vec::new();
    for (a, b) in polygons.iter().flat_map(|p| p.edges()) {
        let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
        if len2 == 0.0 {
            continue;
        }
        let bb = BBox::of([a, b]);
        let mut cuts: Vec<(f64, Point)> = vertices
            .iter()
            .filter(|v| bb.intersects(&BBox::of([**v, **v]), tol))
            .filter(|&&v| key(v) != key(a) && key(v) != key(b))
            .filter(|&&v| point_segment_distance(v, a, b) <= tol)
            .map(|&v| {
                let t = ((v[0] - a[0]) * (b[0] - a[0]) + (v[1] - a[1]) * (b[1] - a[1])) / len2;
                (t, v)
            })
            .filter(|(t, _)| *t > 0.0 && *t < 1.0)
            .collect();
        cuts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut prev = a;
        for (_, v) in cuts {
            if key(v) != key(prev) {
                edges.push((prev, v));
                prev = v;
            }
        }
        edges.push((prev, b));
    }

    // cancel interior edges, which appear once in each direction
    let mut counts: HashMap<((u64, u64), (u64, u64)), i64> = HashMap::new();
    for (a, b) in &edges {
        *counts.entry((key(*a), key(*b))).or_default() += 1;
    }
    let mut remaining: Vec<(Point, Point)> = Vec::new();
    let mut cancelled: HashMap<((u64, u64), (u64, u64)), i64> = HashMap::new();
    for (a, b) in &edges {
        let fwd = (key(*a), key(*b));
        let rev = (key(*b), key(*a));
        let rev_total = counts.get(&rev).copied().unwrap_or(0);
        let used = cancelled.entry(fwd).or_default();
        if *used < rev_total {
            *used += 1;
        } else {
            remaining.push((*a, *b));
        }
    }

    // chain into rings
    let mut outgoing: BTreeMap<(u64, u64), Vec<usize>> = BTreeMap::new();
    for (i, (a, _)) in remaining.iter().enumerate() {
        outgoing.entry(key(*a)).or_default().push(i);
    }
    let mut used = vec![false; remaining.len()];
    let mut rings: Vec<Vec<Point>> = Vec::new();
    for start in 0..remaining.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let origin = remaining[start].0;
        let mut ring = vec![origin, remaining[start].1];
        let mut dir_in = sub(remaining[start].1, remaining[start].0);
        let mut current = remaining[start].1;
        let mut guard = 0;
        while key(current) != key(origin) {
            guard += 1;
            if guard > remaining.len() + 1 {
                return None;
            }
            let candidates = outgoing.get(&key(current))?;
            // rightmost turn keeps pinched rings apart
            let next = candidates
                .iter()
                .copied()
                .filter(|&i| !used[i])
                .min_by(|&i, &j| {
                    let ti = turn_angle(dir_in, sub(remaining[i].1, remaining[i].0));
                    let tj = turn_angle(dir_in, sub(remaining[j].1, remaining[j].0));
                    ti.total_cmp(&tj)
                })?;
            used[next] = true;
            dir_in = sub(remaining[next].1, remaining[next].0);
            current = remaining[next].1;
            ring.push(current);
        }
        rings.push(simplify_collinear(ring));
    }

    let mut exteriors: Vec<Polygon> = Vec::new();
    let mut holes: Vec<Vec<Point>> = Vec::new();
    for r in rings {
        let a = signed_area(&r);
        if a > 0.0 {
            exteriors.push(Polygon::new(r, Vec::new()));
        } else if a < 0.0 {
            holes.push(r);
        }
    }
    for h in holes {
        let probe = h[0];
        let owner = exteriors
            .iter_mut()
            .filter(|e| ring_contains(&e.exterior, probe) || boundary_touch(&e.exterior, probe, tol))
            .min_by(|x, y| x.area().total_cmp(&y.area()))?;
        owner.holes.push(h);
    }
    Some(exteriors)
}

fn boundary_touch(ring: &[Point], p: Point, tol: f64) -> bool {
    ring.windows(2)
        .any(|w| point_segment_distance(p, w[0], w[1]) <= tol)
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

/// Signed turn from `d_in` to `d_out` in (-π, π]; negative is a right turn.
fn turn_angle(d_in: Point, d_out: Point) -> f64 {
    let c = d_in[0] * d_out[1] - d_in[1] * d_out[0];
    let d = d_in[0] * d_out[0] + d_in[1] * d_out[1];
    c.atan2(d)
}

fn simplify_collinear(ring: Vec<Point>) -> Vec<Point> {
    // ring is closed; drop vertices whose neighbours are collinear with them
    let mut pts: Vec<Point> = ring[..ring.len() - 1].to_vec();
    let mut changed = true;
    while changed && pts.len() > 3 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            let c = cross(prev, pts[i], next);
            let dot = (pts[i][0] - prev[0]) * (next[0] - pts[i][0])
                + (pts[i][1] - prev[1]) * (next[1] - pts[i][1]);
            if c == 0.0 && dot > 0.0 {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    let first = pts[0];
    pts.push(first);
    pts
}
