//! Small dense linear-algebra helpers shared by the statistics modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot below which a centered, scaled Gram matrix is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Unbiased sample covariance (denominator n - 1).
pub fn sample_covariance(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let means = column_means(m);
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let denom = (n.saturating_sub(1)).max(1) as f64;
    let mut cov = centered.tr_mul(&centered) / denom;
    symmetrize(&mut cov);
    cov
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Centers each column and scales it to unit root-mean-square. Returns the
/// standardized matrix plus per-column means and scales. Constant columns get
/// scale 0 and are left as zeros.
pub fn standardize_columns(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = m.nrows().max(1) as f64;
    let mut out = m.clone();
    let mut means = Vec::with_capacity(m.ncols());
    let mut scales = Vec::with_capacity(m.ncols());
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let rms = (col.norm_squared() / n).sqrt();
        let scale = if rms > 1e-12 * (1.0 + mean.abs()) { rms } else { 0.0 };
        if scale > 0.0 {
            col.scale_mut(1.0 / scale);
        } else {
            col.fill(0.0);
        }
        means.push(mean);
        scales.push(scale);
    }
    (out, means, scales)
}

/// Horizontally concatenates blocks with equal row counts.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut offset = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), n);
        out.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }
    out
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_rows_vec(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&r| v[r]))
}

pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Ordinary least squares with an intercept.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
}

impl OlsFit {
    pub fn predict_row(&self, row: impl Iterator<Item = f64>) -> f64 {
        self.intercept + row.zip(self.coefficients.iter()).map(|(x, b)| x * b).sum::<f64>()
    }
}

/// Factorized least-squares problem with an intercept, reusable across
/// several responses sharing one design.
pub struct LeastSquares {
    means: Vec<f64>,
    scales: Vec<f64>,
    standardized: DMatrix<f64>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl LeastSquares {
    /// Factorizes `design` (intercept added implicitly). Fails with
    /// `SingularDesign` when a column is constant or the columns are collinear.
    pub fn new(design: &DMatrix<f64>) -> Result<Self> {
        let n = design.nrows();
        let k = design.ncols();
        if n <= k {
            return Err(Error::SingularDesign(format!("{n} rows for {k} columns plus intercept")));
        }
        let (standardized, means, scales) = standardize_columns(design);
        if let Some(j) = scales.iter().position(|&s| s == 0.0) {
            return Err(Error::SingularDesign(format!("column {j} is constant")));
        }
        if k == 0 {
            return Ok(Self { means, scales, standardized, chol: None });
        }
        let gram = standardized.tr_mul(&standardized) / n as f64;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::SingularDesign("Gram matrix not positive definite".into()))?;
        let l = chol.l_dirty();
        for j in 0..k {
            // Gram has unit diagonal, so l_jj^2 is the fraction of column j not
            // explained by the preceding columns.
            if l[(j, j)] * l[(j, j)] < RANK_TOL {
                return Err(Error::SingularDesign(format!("column {j} is collinear with earlier columns")));
            }
        }
        Ok(Self { means, scales, standardized, chol: Some(chol) })
    }

    /// Coefficients on the standardized (centered, unit-RMS) column scale.
    pub fn standardized_coefficients(&self, response: &DVector<f64>) -> DVector<f64> {
        let n = self.standardized.nrows() as f64;
        match &self.chol {
            Some(chol) => {
                let mean_y = response.mean();
                let centered = response.add_scalar(-mean_y);
                let rhs = self.standardized.tr_mul(&centered) / n;
                chol.solve(&rhs)
            }
            None => DVector::zeros(0),
        }
    }

    pub fn fit(&self, response: &DVector<f64>) -> OlsFit {
        let std_coef = self.standardized_coefficients(response);
        let coefficients =
            DVector::from_iterator(std_coef.len(), std_coef.iter().zip(&self.scales).map(|(b, s)| b / s));
        let intercept =
            response.mean() - coefficients.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        OlsFit { intercept, coefficients }
    }

    /// Residuals of `response` after projecting out the intercept and design.
    pub fn residuals(&self, response: &DVector<f64>) -> DVector<f64> {
        let std_coef = self.standardized_coefficients(response);
        let mean_y = response.mean();
        let fitted = if std_coef.is_empty() {
            DVector::zeros(response.len())
        } else {
            &self.standardized * std_coef
        };
        DVector::from_fn(response.len(), |i, _| response[i] - mean_y - fitted[i])
    }
}

/// Convenience one-shot OLS.
pub fn ols(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<OlsFit> {
    Ok(LeastSquares::new(design)?.fit(response))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ols_recovers_exact_linear_relation() {
        let design = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 2.0, 1.0, 3.0, 0.0, 4.0, 1.0, 5.0, 3.0]);
        let y = DVector::from_fn(5, |i, _| 1.5 + 2.0 * design[(i, 0)] - 0.5 * design[(i, 1)]);
        let fit = ols(&design, &y).unwrap();
        assert_abs_diff_eq!(fit.intercept, 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], -0.5, epsilon = 1e-10);
    }

    #[test]
    fn collinear_design_is_singular() {
        let design = DMatrix::from_fn(6, 2, |i, j| if j == 0 { i as f64 } else { 2.0 * i as f64 + 1.0 });
        assert!(matches!(LeastSquares::new(&design), Err(Error::SingularDesign(_))));
        let constant = DMatrix::from_element(6, 1, 3.0);
        assert!(matches!(LeastSquares::new(&constant), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn residuals_are_orthogonal_to_design() {
        let design = DMatrix::from_fn(20, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let y = DVector::from_fn(20, |i, _| ((i * 5) % 13) as f64);
        let r = LeastSquares::new(&design).unwrap().residuals(&y);
        assert_abs_diff_eq!(r.sum(), 0.0, epsilon = 1e-9);
        for col in design.column_iter() {
            assert_abs_diff_eq!(col.dot(&r), 0.0, epsilon = 1e-8);
        }
    }
}
