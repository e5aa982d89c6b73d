//! Numeric containers shared by every pipeline stage.
//!
//! Values are held in double precision regardless of how they were stored
//! on disk.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x p` matrix of feature activations (row = sample) together with the
/// original latent index of every column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
    column_ids: Vec<usize>,
}

impl FeatureMatrix {
    /// Builds a matrix, checking that it is non-empty, finite, and that the
    /// column ids are unique.
    pub fn new(values: DMatrix<f64>, column_ids: Vec<usize>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::NoRows);
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidInput("matrix has no columns".into()));
        }
        if column_ids.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} column ids for {} columns",
                column_ids.len(),
                values.ncols()
            )));
        }
        check_finite(&values)?;
        let mut seen = HashSet::with_capacity(column_ids.len());
        for &id in &column_ids {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("duplicate column id {id}")));
            }
        }
        Ok(Self { values, column_ids })
    }

    /// Matrix with column ids `0..p`.
    pub fn with_default_ids(values: DMatrix<f64>) -> Result<Self> {
        let ids = (0..values.ncols()).collect();
        Self::new(values, ids)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::NoRows);
        }
        let p = rows[0].len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::Parse {
                row: i,
                col: None,
                msg: format!("expected {p} values, found {}", r.len()),
            });
        }
        Self::with_default_ids(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_ids(&self) -> &[usize] {
        &self.column_ids
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Keeps the first `n` rows.
    pub fn truncate_rows(&self, n: usize) -> Result<Self> {
        let n = n.min(self.nrows());
        Self::new(self.values.rows(0, n).into_owned(), self.column_ids.clone())
    }

    /// Fraction of rows on which each column is strictly positive.
    pub fn activation_rates(&self) -> Vec<f64> {
        let n = self.nrows() as f64;
        self.values
            .column_iter()
            .map(|c| c.iter().filter(|&&v| v > 0.0).count() as f64 / n)
            .collect()
    }
}

/// Reports the first non-finite entry in row-major order.
pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Binary task labels in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    values: Vec<u8>,
}

impl LabelVector {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::LabelOutOfRange {
                line: i + 1,
                value: v.to_string(),
            });
        }
        Ok(Self { values })
    }

    pub fn from_bools(values: impl IntoIterator<Item = bool>) -> Self {
        Self {
            values: values.into_iter().map(u8::from).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// Labels in the `{-1, +1}` margin encoding.
    pub fn signed(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if v == 1 { 1.0 } else { -1.0 })
            .collect()
    }

    pub fn has_both_classes(&self) -> bool {
        let ones = self.values.iter().filter(|&&v| v == 1).count();
        ones > 0 && ones < self.values.len()
    }

    pub fn truncate(&self, n: usize) -> Self {
        Self {
            values: self.values[..n.min(self.values.len())].to_vec(),
        }
    }

    /// Checks that the labels pair with a matrix of `nrows` rows.
    pub fn check_aligned(&self, nrows: usize) -> Result<()> {
        if self.values.len() != nrows {
            return Err(Error::Dimension(format!(
                "{} labels for {} matrix rows",
                self.values.len(),
                nrows
            )));
        }
        Ok(())
    }
}
