use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{GraphError, ODPair};
use crate::features::ODDemandPanel;
use crate::geo::{Zone, ZonePartition};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Origin,
    Destination,
}

fn side_zones<'a>(
    od_pairs: &[ODPair],
    partition: &'a ZonePartition,
    side: Side,
) -> Result<Vec<&'a Zone>, GraphError> {
    od_pairs
        .iter()
        .map(|p| {
            if p.origin == p.destination {
                return Err(GraphError::SelfPair(p.index));
            }
            let z = p.zone(side);
            partition.zone(z).ok_or_else(|| GraphError::UnknownZone {
                index: p.index,
                zone: z.to_string(),
            })
        })
        .collect()
}

/// Fills a symmetric matrix with unit diagonal from `f(a, b)` for `a < b`.
fn symmetric(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Tensor {
    let mut m = Tensor::identity(n);
    for a in 0..n {
        for b in a + 1..n {
            let v = f(a, b);
            m.set(a, b, v);
            m.set(b, a, v);
        }
    }
    m
}

/// 1 when the side zones of two OD pairs coincide or share a boundary.
pub fn build_neighborhood(
    od_pairs: &[ODPair],
    partition: &ZonePartition,
    side: Side,
) -> Result<Tensor, GraphError> {
    let zones = side_zones(od_pairs, partition, side)?;
    Ok(symmetric(zones.len(), |a, b| {
        let (za, zb) = (&zones[a].id, &zones[b].id);
        if za == zb || partition.are_adjacent(za, zb) {
            1.0
        } else {
            0.0
        }
    }))
}

fn distance(a: &Zone, b: &Zone) -> f64 {
    let dx = a.centroid[0] - b.centroid[0];
    let dy = a.centroid[1] - b.centroid[1];
    (dx * dx + dy * dy).sqrt()
}

/// Population standard deviation of centroid distances over all unordered
/// pairs of distinct zones in the partition.
pub fn centroid_sigma(partition: &ZonePartition) -> Result<f64, GraphError> {
    let zones: Vec<&Zone> = partition.zones().collect();
    let mut d = Vec::new();
    for i in 0..zones.len() {
        for j in i + 1..zones.len() {
            d.push(distance(zones[i], zones[j]));
        }
    }
    if d.is_empty() {
        return Err(GraphError::DegenerateSigma);
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
    let sigma = var.sqrt();
    if sigma <= f64::EPSILON * mean.max(1.0) {
        return Err(GraphError::DegenerateSigma);
    }
    Ok(sigma)
}

/// Gaussian kernel `exp(-d²/σ²)` of side-zone centroid distances.
pub fn build_centroid_distance(
    od_pairs: &[ODPair],
    partition: &ZonePartition,
    side: Side,
) -> Result<Tensor, GraphError> {
    let zones = side_zones(od_pairs, partition, side)?;
    let sigma = centroid_sigma(partition)?;
    let s2 = sigma * sigma;
    Ok(symmetric(zones.len(), |a, b| {
        let d = distance(zones[a], zones[b]);
        (-d * d / s2).exp()
    }))
}

/// Cosine similarity of side-zone functionality vectors, clipped to `[0, 1]`.
pub fn build_functionality(
    od_pairs: &[ODPair],
    partition: &ZonePartition,
    side: Side,
) -> Result<Tensor, GraphError> {
    let zones = side_zones(od_pairs, partition, side)?;
    let mut vectors = Vec::with_capacity(zones.len());
    let mut expected = None;
    for z in &zones {
        let v = z
            .functionality
            .as_ref()
            .ok_or_else(|| GraphError::MissingFunctionality(z.id.clone()))?;
        let len = *expected.get_or_insert(v.len());
        if v.len() != len {
            return Err(GraphError::FunctionalityLength {
                zone: z.id.clone(),
                len: v.len(),
                expected: len,
            });
        }
        vectors.push(v);
    }
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    Ok(symmetric(zones.len(), |a, b| {
        if zones[a].id == zones[b].id && norms[a] > 0.0 {
            return 1.0;
        }
        if norms[a] == 0.0 || norms[b] == 0.0 {
            return 0.0;
        }
        let dot: f64 = vectors[a].iter().zip(vectors[b]).map(|(x, y)| x * y).sum();
        (dot / (norms[a] * norms[b])).clamp(0.0, 1.0)
    }))
}

/// Pearson correlation of hourly demand over `window`, negatives clipped to 0.
/// Series without variance correlate 0 with everything else.
pub fn build_correlation(
    od_pairs: &[ODPair],
    panel: &ODDemandPanel,
    window: Range<usize>,
) -> Result<Tensor, GraphError> {
    let window = window.start..window.end.min(panel.n_hours());
    if window.len() < 2 {
        return Err(GraphError::ShortPanel(window.len()));
    }
    let sub = panel.select(od_pairs)?;
    let m = window.len() as f64;
    let centred: Vec<Vec<f64>> = (0..sub.n_pairs())
        .map(|od| {
            let s = sub.series(od, window.clone());
            let mean = s.iter().sum::<f64>() / m;
            s.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    Ok(symmetric(centred.len(), |a, b| {
        if norms[a] == 0.0 || norms[b] == 0.0 {
            return 0.0;
        }
        let cov: f64 = centred[a].iter().zip(&centred[b]).map(|(x, y)| x * y).sum();
        (cov / (norms[a] * norms[b])).clamp(0.0, 1.0)
    }))
}

/// Row normalisation `D⁻¹(A + I)`.
pub fn normalize(a: &Tensor) -> Tensor {
    let n = a.rows();
    let mut out = a.clone();
    for r in 0..n {
        let row = out.row_mut(r);
        row[r] += 1.0;
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{HourGrid, ODDemandPanel};
    use crate::geo::geometry::Polygon;
    use crate::geo::Zone;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(id: &str, x0: f64, y0: f64, w: f64, h: f64, f: Option<Vec<f64>>) -> Zone {
        let ring = vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h], [x0, y0]];
        Zone::new(id, vec![Polygon::new(ring, vec![])], f).unwrap()
    }

    fn three_zones() -> ZonePartition {
        ZonePartition::from_zones(vec![
            rect("a", 0.0, 0.0, 1.0, 1.0, Some(vec![1.0, 1.0, 0.0])),
            rect("b", 1.0, 0.0, 1.0, 1.0, Some(vec![1.0, 0.0, 0.0])),
            rect("c", 5.0, 0.0, 1.0, 1.0, Some(vec![0.0, 0.0, 1.0])),
        ])
        .unwrap()
    }

    #[test]
    fn neighborhood_hand_enumeration() {
        let part = three_zones();
        let ods = vec![
            ODPair::new(0, "a", "c"),
            ODPair::new(1, "b", "c"),
            ODPair::new(2, "c", "a"),
            ODPair::new(3, "a", "b"),
        ];
        let m = build_neighborhood(&ods, &part, Side::Origin).unwrap();
        let expected = [
            [1.0, 1.0, 0.0, 1.0],
            [1.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0, 1.0],
        ];
        assert_eq!(m, Tensor::from_rows(&expected).unwrap());
        let d = build_neighborhood(&ods, &part, Side::Destination).unwrap();
        // destinations c, c, a, b
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(0, 2), 0.0);
        assert_eq!(d.get(2, 3), 1.0);
    }

    #[test]
    fn neighborhood_unknown_zone() {
        let part = three_zones();
        let ods = vec![ODPair::new(0, "a", "q")];
        assert!(matches!(
            build_neighborhood(&ods, &part, Side::Destination),
            Err(GraphError::UnknownZone { .. })
        ));
    }

    #[test]
    fn distance_kernel_matches_brute_force() {
        let part = three_zones();
        let centroids = [[0.5, 0.5], [1.5, 0.5], [5.5, 0.5]];
        let d = |i: usize, j: usize| {
            let (p, q): ([f64; 2], [f64; 2]) = (centroids[i], centroids[j]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        let all = [d(0, 1), d(0, 2), d(1, 2)];
        let mu = all.iter().sum::<f64>() / 3.0;
        let sigma = (all.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / 3.0).sqrt();
        approx::assert_relative_eq!(centroid_sigma(&part).unwrap(), sigma, epsilon = 1e-12);

        let ods = vec![
            ODPair::new(0, "a", "b"),
            ODPair::new(1, "b", "a"),
            ODPair::new(2, "c", "a"),
            ODPair::new(3, "a", "c"),
        ];
        let m = build_centroid_distance(&ods, &part, Side::Origin).unwrap();
        let origin = [0, 1, 2, 0];
        for a in 0..4 {
            for b in 0..4 {
                let want = (-(d(origin[a], origin[b]).powi(2)) / (sigma * sigma)).exp();
                approx::assert_relative_eq!(m.get(a, b), want, epsilon = 1e-12);
            }
        }
        assert_eq!(m.get(0, 3), 1.0);
    }

    #[test]
    fn kernel_at_sigma_is_inverse_e() {
        // three collinear centroids at 0, 1, 2 → distances {1, 2, 1}
        let part = ZonePartition::from_zones(vec![
            rect("a", 0.0, 0.0, 1.0, 1.0, None),
            rect("b", 1.0, 0.0, 1.0, 1.0, None),
            rect("c", 2.0, 0.0, 1.0, 1.0, None),
        ])
        .unwrap();
        let sigma = centroid_sigma(&part).unwrap();
        let k = |d: f64| (-d * d / (sigma * sigma)).exp();
        approx::assert_relative_eq!(k(sigma), (-1.0f64).exp(), epsilon = 1e-15);
        approx::assert_relative_eq!(k(sigma), 0.36787944117144233, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_sigma() {
        let part = ZonePartition::from_zones(vec![rect("a", 0.0, 0.0, 1.0, 1.0, None)]).unwrap();
        assert!(matches!(centroid_sigma(&part), Err(GraphError::DegenerateSigma)));
    }

    #[test]
    fn functionality_cosines() {
        let part = three_zones();
        let ods = vec![
            ODPair::new(0, "a", "b"),
            ODPair::new(1, "b", "a"),
            ODPair::new(2, "c", "a"),
            ODPair::new(3, "a", "c"),
        ];
        let m = build_functionality(&ods, &part, Side::Origin).unwrap();
        approx::assert_relative_eq!(m.get(0, 1), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(m.get(0, 3), 1.0);
        assert_eq!(m.get(1, 2), 0.0);
        let bare = ZonePartition::from_zones(vec![
            rect("a", 0.0, 0.0, 1.0, 1.0, None),
            rect("b", 1.0, 0.0, 1.0, 1.0, None),
        ])
        .unwrap();
        assert!(matches!(
            build_functionality(&ods[..2], &bare, Side::Origin),
            Err(GraphError::MissingFunctionality(_))
        ));
    }

    #[test]
    fn zero_functionality_vector() {
        let part = ZonePartition::from_zones(vec![
            rect("a", 0.0, 0.0, 1.0, 1.0, Some(vec![0.0, 0.0])),
            rect("b", 1.0, 0.0, 1.0, 1.0, Some(vec![1.0, 0.0])),
        ])
        .unwrap();
        let ods = vec![ODPair::new(0, "a", "b"), ODPair::new(1, "b", "a")];
        let m = build_functionality(&ods, &part, Side::Origin).unwrap();
        assert_eq!(m.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    fn panel(series: &[Vec<u32>]) -> ODDemandPanel {
        let hours = series[0].len();
        let grid = HourGrid::new(
            NaiveDate::from_ymd_opt(2019, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap(),
            hours,
        );
        let pairs: Vec<ODPair> = (0..series.len())
            .map(|i| ODPair::new(i, &format!("o{i}"), &format!("d{i}")))
            .collect();
        let mut counts = Vec::new();
        for t in 0..hours {
            counts.extend(series.iter().map(|s| s[t]));
        }
        ODDemandPanel::new(grid, pairs, counts).unwrap()
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn correlation_matches_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series: Vec<Vec<u32>> = (0..5)
            .map(|_| (0..48).map(|_| rng.random_range(0..10)).collect())
            .collect();
        let p = panel(&series);
        let m = build_correlation(p.od_pairs(), &p, 0..48).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let x: Vec<f64> = series[a].iter().map(|&v| v as f64).collect();
                let y: Vec<f64> = series[b].iter().map(|&v| v as f64).collect();
                let want = if a == b { 1.0 } else { pearson(&x, &y).max(0.0) };
                approx::assert_relative_eq!(m.get(a, b), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn correlation_clipping_and_constants() {
        let p = panel(&[vec![0, 1, 2, 3], vec![3, 2, 1, 0], vec![4, 4, 4, 4]]);
        let m = build_correlation(p.od_pairs(), &p, 0..4).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(2, 2), 1.0);
        assert!(matches!(
            build_correlation(p.od_pairs(), &p, 0..1),
            Err(GraphError::ShortPanel(1))
        ));
    }

    #[test]
    fn correlation_ignores_hours_after_window() {
        let a = panel(&[vec![0, 1, 2, 3, 9, 0], vec![1, 1, 3, 3, 0, 9]]);
        let b = panel(&[vec![0, 1, 2, 3, 0, 0], vec![1, 1, 3, 3, 0, 0]]);
        assert_eq!(
            build_correlation(a.od_pairs(), &a, 0..4).unwrap(),
            build_correlation(b.od_pairs(), &b, 0..4).unwrap()
        );
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize(&Tensor::zeros(3, 3)), Tensor::identity(3));
        let ring = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(normalize(&ring).data(), &[0.5; 4]);
        let full = normalize(&Tensor::ones(2, 2));
        approx::assert_relative_eq!(full.get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        approx::assert_relative_eq!(full.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = symmetric(6, |_, _| rng.random_range(0.0..1.0));
        let n = normalize(&a);
        for r in 0..6 {
            assert!((n.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
