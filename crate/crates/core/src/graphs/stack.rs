use std::fs;
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::builders::{
    build_centroid_distance, build_correlation, build_functionality, build_neighborhood, normalize, Side,
};
use super::{GraphError, ODPair};
use crate::features::ODDemandPanel;
use crate::geo::ZonePartition;
use crate::numerics::Tensor;

pub const N_GRAPHS: usize = 7;

/// Matrix names in stack order.
pub const MATRIX_NAMES: [&str; N_GRAPHS] = [
    "neighborhood_origin",
    "neighborhood_destination",
    "distance_origin",
    "distance_destination",
    "functionality_origin",
    "functionality_destination",
    "correlation",
];

/// The seven raw OD-pair graphs and their row-normalised forms.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyStack {
    od_pairs: Vec<ODPair>,
    matrices: Vec<Tensor>,
    normalized: Vec<Arc<Tensor>>,
}

impl AdjacencyStack {
    /// Validates and normalises raw matrices given in stack order.
    pub fn new(od_pairs: Vec<ODPair>, matrices: Vec<Tensor>) -> Result<Self, GraphError> {
        if matrices.len() != N_GRAPHS {
            return Err(GraphError::StackSize {
                expected: N_GRAPHS,
                got: matrices.len(),
            });
        }
        let n = od_pairs.len();
        for (m, name) in matrices.iter().zip(MATRIX_NAMES) {
            let bad = |reason: String| GraphError::BadMatrix {
                name: name.to_string(),
                reason,
            };
            if m.shape() != (n, n) {
                return Err(bad(format!("shape {:?}, expected ({n}, {n})", m.shape())));
            }
            for a in 0..n {
                if m.get(a, a) != 1.0 {
                    return Err(bad(format!("diagonal entry {a} is {}", m.get(a, a))));
                }
                for b in 0..n {
                    let v = m.get(a, b);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(bad(format!("entry ({a}, {b}) = {v} outside [0, 1]")));
                    }
                    if v != m.get(b, a) {
                        return Err(bad(format!("not symmetric at ({a}, {b})")));
                    }
                }
            }
        }
        let normalized = matrices.iter().map(|m| Arc::new(normalize(m))).collect();
        Ok(Self {
            od_pairs,
            matrices,
            normalized,
        })
    }

    /// Builds all seven graphs; correlation uses only `train_window` hours.
    pub fn build(
        od_pairs: &[ODPair],
        partition: &ZonePartition,
        panel: &ODDemandPanel,
        train_window: Range<usize>,
    ) -> Result<Self, GraphError> {
        let mut matrices = Vec::with_capacity(N_GRAPHS);
        for side in [Side::Origin, Side::Destination] {
            matrices.push(build_neighborhood(od_pairs, partition, side)?);
        }
        for side in [Side::Origin, Side::Destination] {
            matrices.push(build_centroid_distance(od_pairs, partition, side)?);
        }
        for side in [Side::Origin, Side::Destination] {
            matrices.push(build_functionality(od_pairs, partition, side)?);
        }
        matrices.push(build_correlation(od_pairs, panel, train_window)?);
        Self::new(od_pairs.to_vec(), matrices)
    }

    /// `N` identity graphs, handy for tests and ablations.
    pub fn identity(od_pairs: Vec<ODPair>) -> Self {
        let n = od_pairs.len();
        Self::new(od_pairs, vec![Tensor::identity(n); N_GRAPHS]).expect("identity is a valid graph")
    }

    pub fn n(&self) -> usize {
        self.od_pairs.len()
    }

    pub fn od_pairs(&self) -> &[ODPair] {
        &self.od_pairs
    }

    pub fn matrices(&self) -> &[Tensor] {
        &self.matrices
    }

    pub fn normalized(&self) -> &[Arc<Tensor>] {
        &self.normalized
    }
}

#[derive(Serialize, Deserialize)]
struct StackManifest {
    n: usize,
    matrices: Vec<ManifestEntry>,
    od_pairs: Vec<ODPair>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    file: String,
}

pub const STACK_MANIFEST: &str = "graphs.json";

/// Writes one headerless CSV per raw matrix plus `graphs.json`.
/// Returns the written file names.
pub fn write_stack(stack: &AdjacencyStack, dir: &Path) -> Result<Vec<String>, GraphError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (m, name) in stack.matrices.iter().zip(MATRIX_NAMES) {
        let file = format!("{name}.csv");
        let mut text = String::new();
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(dir.join(&file), text)?;
        entries.push(ManifestEntry {
            name: name.to_string(),
            file: file.clone(),
        });
        files.push(file);
    }
    let manifest = StackManifest {
        n: stack.n(),
        matrices: entries,
        od_pairs: stack.od_pairs.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| GraphError::Parse(e.to_string()))?;
    fs::write(dir.join(STACK_MANIFEST), json + "\n")?;
    files.push(STACK_MANIFEST.to_string());
    Ok(files)
}

pub fn read_stack(dir: &Path) -> Result<AdjacencyStack, GraphError> {
    let text = fs::read_to_string(dir.join(STACK_MANIFEST))?;
    let manifest: StackManifest = serde_json::from_str(&text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let names: Vec<&str> = manifest.matrices.iter().map(|e| e.name.as_str()).collect();
    if names != MATRIX_NAMES {
        return Err(GraphError::Parse(format!(
            "graph order {names:?} differs from {MATRIX_NAMES:?}"
        )));
    }
    if manifest.od_pairs.len() != manifest.n {
        return Err(GraphError::Parse("OD pair list does not match n".into()));
    }
    let mut matrices = Vec::with_capacity(N_GRAPHS);
    for e in &manifest.matrices {
        let body = fs::read_to_string(dir.join(&e.file))?;
        let mut data = Vec::with_capacity(manifest.n * manifest.n);
        for line in body.lines().filter(|l| !l.trim().is_empty()) {
            for cell in line.split(',') {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| GraphError::Parse(format!("{}: bad number {cell:?}", e.file)))?;
                data.push(v);
            }
        }
        let m = Tensor::from_vec(manifest.n, manifest.n, data)
            .map_err(|err| GraphError::Parse(format!("{}: {err}", e.file)))?;
        matrices.push(m);
    }
    AdjacencyStack::new(manifest.od_pairs, matrices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(n: usize, seed: u64) -> AdjacencyStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs: Vec<ODPair> = (0..n).map(|i| ODPair::new(i, &format!("o{i}"), &format!("d{i}"))).collect();
        let matrices = (0..N_GRAPHS)
            .map(|_| {
                let mut m = Tensor::identity(n);
                for a in 0..n {
                    for b in a + 1..n {
                        let v: f64 = rng.random_range(0.0..1.0);
                        m.set(a, b, v);
                        m.set(b, a, v);
                    }
                }
                m
            })
            .collect();
        AdjacencyStack::new(pairs, matrices).unwrap()
    }

    #[test]
    fn round_trip_preserves_order_and_values() {
        let s = random_stack(6, 1);
        let dir = tempfile::tempdir().unwrap();
        let files = write_stack(&s, dir.path()).unwrap();
        assert_eq!(files.len(), 8);
        let back = read_stack(dir.path()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_invalid_matrices() {
        let pairs = vec![ODPair::new(0, "a", "b"), ODPair::new(1, "b", "a")];
        let mut ms = vec![Tensor::identity(2); N_GRAPHS];
        ms[3].set(0, 1, 0.5);
        assert!(matches!(
            AdjacencyStack::new(pairs.clone(), ms),
            Err(GraphError::BadMatrix { ref name, .. }) if name == "distance_destination"
        ));
        assert!(matches!(
            AdjacencyStack::new(pairs, vec![Tensor::identity(2); 6]),
            Err(GraphError::StackSize { .. })
        ));
    }

    #[test]
    fn normalized_rows_sum_to_one() {
        let s = random_stack(8, 2);
        for m in s.normalized() {
            for r in 0..8 {
                assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
