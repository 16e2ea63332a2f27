use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Labeled binary classification data: `m` samples of dimension `n`, labels
/// in `{-1, +1}`, both classes present.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: Vec<i8>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<i8>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidDataset("no features".into()));
        }
        if let Some(bad) = y.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} is not -1 or +1"
            )));
        }
        if !y.contains(&1) || !y.contains(&-1) {
            return Err(Error::InvalidDataset("both classes must be present".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self { x, y })
    }

    /// Builds a data set from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<i8>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), n, &flat), y)
    }

    /// Number of samples `m`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Number of features `n`.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Sample matrix `X`, one sample per row.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[i8] {
        &self.y
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    pub fn label(&self, i: usize) -> f64 {
        f64::from(self.y[i])
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&l| l == 1).count();
        (pos, self.y.len() - pos)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(indices);
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Self::new(x, y)
    }

    /// Every sample multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            x: &self.x * t,
            y: self.y.clone(),
        }
    }

    /// CSV with header `f1,..,fn,label`; values carry 17 significant digits
    /// so reading the file back reproduces every bit.
    pub fn to_csv_string(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        for k in 0..n {
            let _ = write!(out, "f{},", k + 1);
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            for k in 0..n {
                let _ = write!(out, "{:.16e},", self.x[(i, k)]);
            }
            let _ = writeln!(out, "{}", self.y[i]);
        }
        out
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }
}
