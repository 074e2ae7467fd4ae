//! Dense (explicit-matrix) operators: probing assembly of matrix-free maps
//! and a plain row-major matrix type implementing [`LinearOperator`].
//!
//! Stability of the residual-block step holds for arbitrary matrices, not
//! just stencils; [`DenseOp`] lets the verification suites drive random
//! dense matrices through the same step formulas.

use crate::error::{Error, Result};
use crate::operators::LinearOperator;

/// A dense matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOp {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseOp {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Size(format!(
                "dense operator wants {rows}x{cols} = {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseOp { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

impl LinearOperator for DenseOp {
    fn domain_len(&self) -> usize {
        self.cols
    }

    fn codomain_len(&self) -> usize {
        self.rows
    }

    fn apply_slice(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.cols, "dense operator domain mismatch");
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(u).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    fn apply_adjoint_slice(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "dense operator codomain mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
        out
    }
}

/// Materialise any matrix-free operator by probing it with unit vectors.
pub fn assemble<Op: LinearOperator + ?Sized>(op: &Op) -> DenseOp {
    let rows = op.codomain_len();
    let cols = op.domain_len();
    let mut data = vec![0.0; rows * cols];
    let mut e = vec![0.0; cols];
    for c in 0..cols {
        e[c] = 1.0;
        let col = op.apply_slice(&e);
        for (r, &val) in col.iter().enumerate() {
            data[r * cols + c] = val;
        }
        e[c] = 0.0;
    }
    DenseOp { rows, cols, data }
}
