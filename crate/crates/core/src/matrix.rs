//! Minimal row-major matrix used for keys and values.

use crate::error::{Error, Result};

/// Dense row-major matrix with a fixed column count. Rows are appended one
/// at a time; the storage is a single contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    data: Vec<f64>,
    cols: usize,
}

impl RowMatrix {
    pub fn new(cols: usize) -> Self {
        assert!(cols >= 1, "column count must be positive");
        Self {
            data: Vec::new(),
            cols,
        }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        assert!(cols >= 1, "column count must be positive");
        Self {
            data: Vec::with_capacity(cols * rows),
            cols,
        }
    }

    /// Build from a flat row-major buffer. The buffer length must be a
    /// multiple of `cols`.
    pub fn from_flat(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: data.len(),
            });
        }
        Ok(Self { data, cols })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * self.cols;
        &self.data[start..start + self.cols]
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
