//! OD-pair graphs: neighbourhood, centroid distance, functionality and
//! demand correlation, each built from the origin or destination side.

mod builders;
mod stack;

pub use builders::{
    build_centroid_distance, build_correlation, build_functionality, build_neighborhood,
    centroid_sigma, normalize, Side,
};
pub use stack::{read_stack, write_stack, AdjacencyStack, MATRIX_NAMES, N_GRAPHS, STACK_MANIFEST};

use serde::{Deserialize, Serialize};

use crate::features::FeatureError;

/// An ordered pair of distinct zones with its dense row index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ODPair {
    pub index: usize,
    pub origin: String,
    pub destination: String,
}

impl ODPair {
    pub fn new(index: usize, origin: &str, destination: &str) -> Self {
        Self {
            index,
            origin: origin.to_string(),
            destination: destination.to_string(),
        }
    }

    pub fn zone(&self, side: Side) -> &str {
        match side {
            Side::Origin => &self.origin,
            Side::Destination => &self.destination,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("OD pair {index} references unknown zone {zone:?}")]
    UnknownZone { index: usize, zone: String },
    #[error("OD pair {0} has identical origin and destination")]
    SelfPair(usize),
    #[error("all zone centroids coincide; distance kernel width is zero")]
    DegenerateSigma,
    #[error("zone {0:?} has no functionality vector")]
    MissingFunctionality(String),
    #[error("zone {zone:?}: functionality length {len}, expected {expected}")]
    FunctionalityLength { zone: String, len: usize, expected: usize },
    #[error("correlation needs at least 2 hours of training demand, got {0}")]
    ShortPanel(usize),
    #[error("expected {expected} adjacency matrices, got {got}")]
    StackSize { expected: usize, got: usize },
    #[error("matrix {name}: {reason}")]
    BadMatrix { name: String, reason: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
