use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Tolerance on row norms for a matrix flagged as unit-normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

/// Dense row-major f32 matrix of feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Builds an unnormalized matrix, checking shape and finiteness.
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::EmptyMatrix { rows, dim });
        }
        if data.len() != rows * dim {
            return Err(Error::ShapeMismatch {
                rows,
                dim,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self {
            rows,
            dim,
            data,
            normalized: false,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    left: dim,
                    right: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    /// Marks the matrix as unit-normalized after checking every row norm.
    pub fn assume_unit_norm(mut self) -> Result<Self> {
        for i in 0..self.rows {
            let n = numeric::norm(self.row(i));
            if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotUnitNorm { row: i, norm: n });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Divides every row by its Euclidean norm.
    pub fn normalize_rows(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.rows {
            let row = self.row(i);
            let n = numeric::norm(row);
            if n == 0.0 {
                return Err(Error::ZeroNormRow { row: i });
            }
            data.extend(row.iter().map(|&v| (f64::from(v) / n) as f32));
        }
        Ok(Self {
            rows: self.rows,
            dim: self.dim,
            data,
            normalized: true,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Copies the given rows, in order, into a new matrix with the same flag.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut m = Self::new(indices.len(), self.dim, data)?;
        m.normalized = self.normalized;
        Ok(m)
    }
}
