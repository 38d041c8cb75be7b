//! Dense 2-D matrices, a recording tape for reverse-mode gradients, and Adam.
//!
//! Everything here is `f64` and row-major. The graphs this crate works with
//! top out around a thousand nodes per type, so dense storage is sufficient;
//! the matrix product skips zero entries of its left operand, which keeps
//! products against sparse adjacency matrices cheap without a sparse format.

mod adam;
pub mod gradcheck;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::Matrix;
pub use tape::{sigmoid, softplus, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("optimizer state error: {0}")]
    State(String),
    #[error("numeric guard: {0}")]
    Numeric(String),
}

/// A matrix that may own a gradient buffer. Model parameters are stored as
/// `DenseTensor`s; the tape borrows their values and hands gradients back.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub value: Matrix,
    pub requires_grad: bool,
    pub grad: Option<Matrix>,
}

impl DenseTensor {
    pub fn new(value: Matrix, requires_grad: bool) -> Self {
        Self {
            value,
            requires_grad,
            grad: None,
        }
    }

    pub fn parameter(value: Matrix) -> Self {
        Self::new(value, true)
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }

    /// Adds `g` into the gradient buffer, creating it on first use.
    pub fn accumulate_grad(&mut self, g: &Matrix) -> Result<(), TensorError> {
        if g.shape() != self.value.shape() {
            return Err(TensorError::Shape {
                op: "accumulate_grad",
                left: self.value.shape(),
                right: g.shape(),
            });
        }
        match &mut self.grad {
            Some(existing) => existing.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
        Ok(())
    }

    /// Sets the gradient to an explicit zero matrix of the right shape.
    pub fn zero_grad(&mut self) {
        let (r, c) = self.value.shape();
        self.grad = Some(Matrix::zeros(r, c));
    }
}
