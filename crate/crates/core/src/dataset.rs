use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Partition of the covariate columns into `W` (nonparametric part) and `Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSplit {
    pub w: Vec<usize>,
    pub z: Vec<usize>,
}

/// Paired observations `(X_i, Y_i)`, `X` stored as an `n x d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    split: Option<ColumnSplit>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if d < 1 {
            return Err(Error::InvalidInput("need at least one covariate".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidInput(format!(
                "covariates have {n} rows but response has {}",
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("missing or non-finite values".into()));
        }
        Ok(Dataset { x, y, split: None })
    }

    /// Builds a one-covariate dataset from `(x, y)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let n = pairs.len();
        let x = DMatrix::from_iterator(n, 1, pairs.iter().map(|p| p.0));
        let y = DVector::from_iterator(n, pairs.iter().map(|p| p.1));
        Dataset::new(x, y)
    }

    /// Builds a dataset from row-major covariate rows.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged covariate rows".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Dataset::new(x, DVector::from_vec(y))
    }

    pub fn with_split(mut self, w: Vec<usize>, z: Vec<usize>) -> Result<Self> {
        let d = self.d();
        if w.is_empty() || z.is_empty() {
            return Err(Error::InvalidInput("both W and Z need at least one column".into()));
        }
        let mut all: Vec<usize> = w.iter().chain(z.iter()).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != d || all.iter().any(|&c| c >= d) {
            return Err(Error::InvalidInput(format!(
                "W and Z columns must partition the {d} covariates"
            )));
        }
        self.split = Some(ColumnSplit { w, z });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn split(&self) -> Option<&ColumnSplit> {
        self.split.as_ref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Returns a copy with a different response vector.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("replacement response is invalid".into()));
        }
        Ok(Dataset {
            x: self.x.clone(),
            y,
            split: self.split.clone(),
        })
    }

    pub(crate) fn require_split(&self) -> Result<&ColumnSplit> {
        self.split
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("this family needs a W/Z column split".into()))
    }

    pub(crate) fn columns(&self, cols: &[usize]) -> DMatrix<f64> {
        self.x.select_columns(cols)
    }
}
