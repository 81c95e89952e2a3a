//! Sample matrices with one observation per row.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// An `n x d` matrix of samples, plus optional ground-truth inlier labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: DMatrix<f64>,
    labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "dataset must be non-empty, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { samples, labels: None })
    }

    /// Builds a dataset from row vectors. All rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no rows".into()));
        }
        let d = rows[0].len();
        for r in rows {
            check_dim(d, r.len(), "row length")?;
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        check_dim(self.n(), labels.len(), "label count")?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    pub fn d(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.samples.row(i).iter().copied().collect())
            .collect()
    }

    /// Rows as columns of a `d x n` matrix, each shifted by `-center`.
    pub(crate) fn centered_columns(&self, center: &DVector<f64>) -> DMatrix<f64> {
        let (n, d) = (self.n(), self.d());
        DMatrix::from_fn(d, n, |j, i| self.samples[(i, j)] - center[j])
    }

    /// Sub-dataset with the selected rows, in the given order. Labels follow.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty row selection".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidArgument(format!("row index {bad} out of range")));
        }
        let samples = DMatrix::from_fn(rows.len(), self.d(), |i, j| self.samples[(rows[i], j)]);
        let labels = self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect());
        Ok(Self { samples, labels })
    }

    /// Arithmetic mean of all rows.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.d());
        for i in 0..self.n() {
            for j in 0..self.d() {
                m[j] += self.samples[(i, j)];
            }
        }
        m / self.n() as f64
    }
}
