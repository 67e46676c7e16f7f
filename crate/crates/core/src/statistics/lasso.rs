//! Lasso by cyclic coordinate descent on the centered Gram matrix.
//!
//! Minimizes `(1/2n) ||y - b0 - X b||^2 + lambda * sum_j w_j |b_j|` where the
//! penalty weights `w_j` default to 1; a zero weight leaves a column
//! unpenalized. The intercept is never penalized and is recovered from the
//! column means.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_PATH_LENGTH: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Coordinate-descent sweeps performed.
    pub n_iterations: usize,
    pub converged: bool,
    /// Penalized objective after each sweep.
    pub objective_history: Vec<f64>,
}

/// How the lasso penalty is chosen for knockoff statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    CrossValidated { folds: usize },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::CrossValidated { folds: 10 }
    }
}

/// A lasso problem reduced to sufficient statistics.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    n: usize,
    x_means: DVector<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    penalty: Vec<f64>,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl LassoProblem {
    pub fn new(design: &DMatrix<f64>, response: &DVector<f64>, penalty_factors: Option<&[f64]>) -> Result<Self> {
        let (n, k) = design.shape();
        if response.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: response.len() });
        }
        if n == 0 {
            return Err(Error::InsufficientRows { required: 1, actual: 0 });
        }
        if !linalg::all_finite(design) || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let penalty = match penalty_factors {
            Some(w) if w.len() != k => return Err(Error::LengthMismatch { expected: k, actual: w.len() }),
            Some(w) if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) => {
                return Err(Error::InvalidConfig("penalty factors must be finite and non-negative".into()))
            }
            Some(w) => w.to_vec(),
            None => vec![1.0; k],
        };
        let x_means = linalg::column_means(design);
        let y_mean = response.mean();
        let mut centered = design.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_means[j]);
        }
        let yc = response.add_scalar(-y_mean);
        let nf = n as f64;
        let mut gram = centered.tr_mul(&centered) / nf;
        linalg::symmetrize(&mut gram);
        let xty = centered.tr_mul(&yc) / nf;
        let yty = yc.norm_squared() / nf;
        Ok(Self { n, x_means, y_mean, gram, xty, yty, penalty })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.xty.len()
    }

    fn objective(&self, b: &DVector<f64>, q: &DVector<f64>, lambda: f64) -> f64 {
        let quad = 0.5 * (self.yty - 2.0 * self.xty.dot(b) + b.dot(q));
        let l1: f64 = if lambda == 0.0 {
            0.0
        } else {
            b.iter().zip(&self.penalty).map(|(v, w)| w * v.abs()).sum::<f64>() * lambda
        };
        quad + l1
    }

    /// One coordinate-descent pass over `coords`; returns the largest
    /// `G_jj * delta_j^2`, the squared change measured in fitted-value units.
    fn sweep(&self, b: &mut DVector<f64>, q: &mut DVector<f64>, lambda: f64, coords: &[usize]) -> f64 {
        let mut max_change = 0.0f64;
        for &j in coords {
            let gjj = self.gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let old = b[j];
            let rho = self.xty[j] - q[j] + gjj * old;
            let thresh = lambda * self.penalty[j];
            let new = if thresh.is_infinite() { 0.0 } else { soft_threshold(rho, thresh) / gjj };
            let delta = new - old;
            if delta != 0.0 {
                b[j] = new;
                q.axpy(delta, &self.gram.column(j), 1.0);
                max_change = max_change.max(gjj * delta * delta);
            }
        }
        max_change
    }

    /// Solves at one `lambda`, optionally warm-started. Converged once no
    /// coordinate moves the fit by more than `tol` times the response variance.
    pub fn solve(&self, lambda: f64, warm_start: Option<&DVector<f64>>, tol: f64, max_iter: usize) -> LassoFit {
        let k = self.n_features();
        let tol = tol * self.yty.max(f64::MIN_POSITIVE);
        let mut b = warm_start.cloned().unwrap_or_else(|| self.unpenalized_start());
        let mut q = &self.gram * &b;
        let all: Vec<usize> = (0..k).collect();
        let mut history = Vec::new();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < max_iter {
            let change = self.sweep(&mut b, &mut q, lambda, &all);
            sweeps += 1;
            history.push(self.objective(&b, &q, lambda));
            if change < tol {
                converged = true;
                break;
            }
            // Iterate on the active set until it settles, then re-check all.
            let active: Vec<usize> =
                (0..k).filter(|&j| b[j] != 0.0 || self.penalty[j] == 0.0).collect();
            while sweeps < max_iter {
                let change = self.sweep(&mut b, &mut q, lambda, &active);
                sweeps += 1;
                history.push(self.objective(&b, &q, lambda));
                if change < tol {
                    break;
                }
            }
        }
        let intercept = self.y_mean - self.x_means.dot(&b);
        LassoFit { coefficients: b, intercept, lambda, n_iterations: sweeps, converged, objective_history: history }
    }

    /// Least-squares fit of the unpenalized columns alone, zero elsewhere.
    fn unpenalized_start(&self) -> DVector<f64> {
        let k = self.n_features();
        let free: Vec<usize> = (0..k).filter(|&j| self.penalty[j] == 0.0).collect();
        let mut b = DVector::zeros(k);
        if free.is_empty() {
            return b;
        }
        let g = DMatrix::from_fn(free.len(), free.len(), |a, c| self.gram[(free[a], free[c])]);
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&j| self.xty[j]));
        if let Ok(sol) = g.svd(true, true).solve(&rhs, 1e-12) {
            for (a, &j) in free.iter().enumerate() {
                b[j] = sol[a];
            }
        }
        b
    }

    /// Smallest `lambda` at which every penalized coefficient is zero, padded
    /// by a relative 1e-10 so that rounding cannot reactivate a coordinate.
    pub fn lambda_max(&self) -> f64 {
        let q = &self.gram * self.unpenalized_start();
        let raw = (0..self.n_features())
            .filter(|&j| self.penalty[j] > 0.0 && self.gram[(j, j)] > 0.0)
            .map(|j| (self.xty[j] - q[j]).abs() / self.penalty[j])
            .fold(0.0, f64::max);
        raw * (1.0 + 1e-10)
    }

    /// Warm-started fits along a decreasing `lambdas` sequence.
    pub fn path(&self, lambdas: &[f64], tol: f64, max_iter: usize) -> Vec<LassoFit> {
        let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let warm = fits.last().map(|f| f.coefficients.clone());
            fits.push(self.solve(lambda, warm.as_ref(), tol, max_iter));
        }
        fits
    }

    /// Fraction of response variance explained by `b`.
    pub fn explained_variance(&self, b: &DVector<f64>) -> f64 {
        if self.yty <= 0.0 {
            return 0.0;
        }
        let rss = self.yty - 2.0 * self.xty.dot(b) + b.dot(&(&self.gram * b));
        1.0 - rss / self.yty
    }

    /// Like [`LassoProblem::path`], but stops once the fit explains more than
    /// 99.9% of the variance or the explained fraction changes by less than
    /// 1e-5 (relative) between successive lambdas.
    pub fn path_until_saturated(&self, lambdas: &[f64], tol: f64, max_iter: usize) -> Vec<LassoFit> {
        let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
        let mut prev = 0.0;
        for (i, &lambda) in lambdas.iter().enumerate() {
            let warm = fits.last().map(|f| f.coefficients.clone());
            let fit = self.solve(lambda, warm.as_ref(), tol, max_iter);
            let ratio = self.explained_variance(&fit.coefficients);
            fits.push(fit);
            if i >= 4 && (ratio > 0.999 || ratio - prev < 1e-5 * ratio) {
                break;
            }
            prev = ratio;
        }
        fits
    }
}

/// Solves a single lasso problem with unit penalty weights.
pub fn lasso_coordinate_descent(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(LassoProblem::new(design, response, None)?.solve(lambda, None, tol, max_iter))
}

/// `count` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count <= 1 {
        return vec![lambda_max];
    }
    let log_hi = lambda_max.ln();
    let log_lo = (lambda_max * ratio).ln();
    (0..count)
        .map(|i| (log_hi + (log_lo - log_hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub lambdas: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub best_index: usize,
    /// Full-data fit at the selected lambda.
    pub fit: LassoFit,
}

/// K-fold cross-validated lasso over a warm-started path of up to
/// [`DEFAULT_PATH_LENGTH`] lambdas, truncated where the full-data path
/// saturates; picks the lambda with smallest held-out squared error.
pub fn cross_validated_lasso<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty_factors: Option<&[f64]>,
    folds: usize,
    rng: &mut R,
) -> Result<CrossValidation> {
    let (n, k) = design.shape();
    if folds < 2 || folds > n {
        return Err(Error::InvalidConfig(format!("cannot run {folds}-fold cross-validation on {n} rows")));
    }
    let full = LassoProblem::new(design, response, penalty_factors)?;
    let lambda_max = full.lambda_max();
    if lambda_max <= f64::MIN_POSITIVE {
        let fit = full.solve(0.0, None, DEFAULT_TOL, DEFAULT_MAX_ITER);
        return Ok(CrossValidation { lambdas: vec![0.0], cv_error: vec![0.0], best_index: 0, fit });
    }
    let ratio = if n > k { 1e-4 } else { 1e-2 };
    let mut lambdas = lambda_grid(lambda_max, DEFAULT_PATH_LENGTH, ratio);
    let mut full_fits = full.path_until_saturated(&lambdas, DEFAULT_TOL, DEFAULT_MAX_ITER);
    lambdas.truncate(full_fits.len());

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let mut sq_err = vec![0.0; lambdas.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let problem = LassoProblem::new(
            &linalg::select_rows(design, &train),
            &linalg::select_rows_vec(response, &train),
            penalty_factors,
        )?;
        let test_x = linalg::select_rows(design, &test);
        for (l, fit) in problem.path(&lambdas, DEFAULT_TOL, DEFAULT_MAX_ITER).iter().enumerate() {
            let pred = &test_x * &fit.coefficients;
            sq_err[l] += test
                .iter()
                .enumerate()
                .map(|(t, &row)| (response[row] - fit.intercept - pred[t]).powi(2))
                .sum::<f64>();
        }
    }
    let cv_error: Vec<f64> = sq_err.iter().map(|e| e / n as f64).collect();
    let best_index = cv_error
        .iter()
        .enumerate()
        .fold(0, |best, (i, &e)| if e < cv_error[best] { i } else { best });
    full_fits.truncate(best_index + 1);
    let fit = full_fits.pop().expect("non-empty path");
    Ok(CrossValidation { lambdas, cv_error, best_index, fit })
}

/// Fits the lasso under a [`LambdaRule`].
pub fn fit_with_rule<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty_factors: Option<&[f64]>,
    rule: LambdaRule,
    rng: &mut R,
) -> Result<LassoFit> {
    match rule {
        LambdaRule::Fixed(lambda) => {
            if !(lambda >= 0.0) {
                return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {lambda}")));
            }
            Ok(LassoProblem::new(design, response, penalty_factors)?.solve(lambda, None, DEFAULT_TOL, DEFAULT_MAX_ITER))
        }
        LambdaRule::CrossValidated { folds } => {
            // Fewer rows than folds falls back to leave-one-out.
            let folds = folds.min(design.nrows());
            Ok(cross_validated_lasso(design, response, penalty_factors, folds, rng)?.fit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_distr::StandardNormal;

    /// Centered columns with `X^T X = n I`, built by Gram-Schmidt.
    pub(crate) fn orthonormal_design(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let mut x = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        for j in 0..k {
            let mut col = x.column(j).into_owned();
            col.axpy(-ones.dot(&col), &ones, 1.0);
            for l in 0..j {
                let prev = x.column(l).into_owned() / (n as f64).sqrt();
                col.axpy(-prev.dot(&col), &prev, 1.0);
            }
            col *= (n as f64).sqrt() / col.norm();
            x.set_column(j, &col);
        }
        x
    }

    #[test]
    fn unpenalized_limit_matches_ols() {
        let x = orthonormal_design(50, 4, 1);
        let y = DVector::from_fn(50, |i, _| 0.3 * x[(i, 0)] - 1.2 * x[(i, 2)] + 0.5 + ((i * 7) % 5) as f64 * 0.01);
        let fit = lasso_coordinate_descent(&x, &y, 0.0, 1e-12, 10_000).unwrap();
        let ols = linalg::ols(&x, &y).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(fit.coefficients[j], ols.coefficients[j], epsilon = 1e-8);
        }
        assert_abs_diff_eq!(fit.intercept, ols.intercept, epsilon = 1e-8);
    }

    #[test]
    fn single_column_soft_threshold() {
        let x = orthonormal_design(40, 1, 2);
        let y = DVector::from_fn(40, |i, _| 2.0 * x[(i, 0)]);
        let fit = lasso_coordinate_descent(&x, &y, 0.5, 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 1.5, epsilon = 1e-10);
    }

    #[test]
    fn lambda_max_annihilates() {
        let mut rng = rng_from_seed(3);
        let x = DMatrix::from_fn(60, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(60, |i, _| x[(i, 1)] + rng.sample::<f64, _>(StandardNormal));
        let problem = LassoProblem::new(&x, &y, None).unwrap();
        let lmax = problem.lambda_max();
        let fit = problem.solve(lmax, None, 1e-10, 1000);
        assert!(fit.coefficients.iter().all(|&b| b == 0.0));
        let below = problem.solve(lmax * 0.99, None, 1e-10, 1000);
        assert!(below.coefficients.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn unpenalized_columns_survive_large_lambda() {
        let mut rng = rng_from_seed(4);
        let x = DMatrix::from_fn(80, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(80, |i, _| 2.0 * x[(i, 2)] + 0.1 * rng.sample::<f64, _>(StandardNormal));
        let problem = LassoProblem::new(&x, &y, Some(&[1.0, 1.0, 0.0])).unwrap();
        let fit = problem.solve(1e6, None, 1e-10, 1000);
        assert_eq!(fit.coefficients[0], 0.0);
        assert_eq!(fit.coefficients[1], 0.0);
        assert!((fit.coefficients[2] - 2.0).abs() < 0.1);
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut rng = rng_from_seed(5);
        let base = DMatrix::from_fn(30, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(30, 2, |i, j| base[(i, 0)] * (1.0 + 0.01 * j as f64));
        let y = DVector::from_fn(30, |i, _| base[(i, 0)]);
        let fit = lasso_coordinate_descent(&x, &y, 1e-4, 1e-14, 2).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.n_iterations, 2);
    }

    #[test]
    fn cross_validation_prefers_signal() {
        let mut rng = rng_from_seed(6);
        let x = DMatrix::from_fn(200, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(200, |i, _| 1.5 * x[(i, 0)] + rng.sample::<f64, _>(StandardNormal));
        let cv = cross_validated_lasso(&x, &y, None, 10, &mut rng_from_seed(1)).unwrap();
        assert!(cv.lambdas.len() <= DEFAULT_PATH_LENGTH);
        assert_eq!(cv.cv_error.len(), cv.lambdas.len());
        assert!(cv.fit.coefficients[0] > 1.0);
        let again = cross_validated_lasso(&x, &y, None, 10, &mut rng_from_seed(1)).unwrap();
        assert_eq!(cv.fit.coefficients, again.fit.coefficients);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn objective_never_increases(seed in 0u64..10_000, lambda in 0.0f64..0.5) {
            let mut rng = rng_from_seed(seed);
            let x = DMatrix::from_fn(40, 8, |i, j| {
                let z: f64 = rng.sample(StandardNormal);
                z + if j > 0 { 0.5 * (i as f64).cos() } else { 0.0 }
            });
            let y = DVector::from_fn(40, |i, _| x[(i, 0)] - x[(i, 3)] + rng.sample::<f64, _>(StandardNormal));
            let fit = lasso_coordinate_descent(&x, &y, lambda, 1e-10, 500).unwrap();
            for w in fit.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }
    }
}
