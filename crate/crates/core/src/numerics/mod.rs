//! Dense matrices, a reverse-mode tape, Adam and dropout.

mod adam;
mod dropout;
mod tape;
mod tensor;

pub use adam::Adam;
pub use dropout::{dropout_mask, Mode};
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {}x{} and {}x{}", .lhs.0, .lhs.1, .rhs.0, .rhs.1)]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("tensor {rows}x{cols} cannot hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("column slice {start}..{end} out of range for {cols} columns")]
    BadSlice { start: usize, end: usize, cols: usize },
    #[error("loss must be 1x1, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("optimizer expected {grads} parameter tensors, got {params}")]
    ParamCount { params: usize, grads: usize },
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Self::ShapeMismatch { op, lhs, rhs }
    }
}
