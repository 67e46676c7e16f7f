use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A column-aligned sample: exposure `x`, confounders `v` (n x d, d may be 0),
/// candidate mediators `m` (n x p) and outcome `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DVector<f64>,
    pub v: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DVector<f64>, v: DMatrix<f64>, m: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = x.len();
        for rows in [v.nrows(), m.nrows(), y.len()] {
            if rows != n {
                return Err(Error::LengthMismatch { expected: n, actual: rows });
            }
        }
        if m.ncols() == 0 {
            return Err(Error::InsufficientColumns { required: 1, actual: 0 });
        }
        let finite = x.iter().chain(y.iter()).all(|v| v.is_finite())
            && linalg::all_finite(&v)
            && linalg::all_finite(&m);
        if !finite {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { x, v, m, y })
    }

    /// Dataset without confounders.
    pub fn without_covariates(x: DVector<f64>, m: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = x.len();
        Self::new(x, DMatrix::zeros(n, 0), m, y)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn p(&self) -> usize {
        self.m.ncols()
    }

    pub fn d(&self) -> usize {
        self.v.ncols()
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n(), 1, self.x.as_slice())
    }

    /// `[V | X]`, the adjustment block used by both paths.
    pub fn adjustment_block(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.v, &self.x_matrix()])
    }

    pub fn subset_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: linalg::select_rows_vec(&self.x, rows),
            v: linalg::select_rows(&self.v, rows),
            m: linalg::select_rows(&self.m, rows),
            y: linalg::select_rows_vec(&self.y, rows),
        }
    }
}
