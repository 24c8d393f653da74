use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n` members by `d` state dimensions, one member per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.nrows() < 2 {
            return Err(Error::InvalidDimension(format!(
                "an ensemble needs at least 2 members, got {}",
                members.nrows()
            )));
        }
        if members.ncols() == 0 {
            return Err(Error::InvalidDimension("ensemble members have zero dimension".into()));
        }
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("ensemble contains non-finite values".into()));
        }
        Ok(Self { members })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDimension("ensemble rows have different lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    /// Wraps a matrix that is known to satisfy the invariants.
    pub(crate) fn from_matrix_unchecked(members: DMatrix<f64>) -> Self {
        Self { members }
    }

    pub fn size(&self) -> usize {
        self.members.nrows()
    }

    pub fn dim(&self) -> usize {
        self.members.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.members
    }

    pub fn member(&self, j: usize) -> Vec<f64> {
        self.members.row(j).iter().copied().collect()
    }

    /// Values of every member in dimension `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.members.column(k).iter().copied().collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        column_means(&self.members)
    }

    pub fn is_finite(&self) -> bool {
        self.members.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}
