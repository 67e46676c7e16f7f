use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::forest::{fit_regression_forest, permutation_importance, ForestConfig};
use super::lasso::{fit_with_rule, LambdaRule};
use super::{Path, StatMethod, StatPair};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::knockoff::{conditional_knockoff_lenient, default_shrinkage, second_order_knockoff, second_order_knockoff_lenient};
use crate::linalg::{self, LeastSquares};
use crate::rng::{next_base_seed, unit_rng};

/// A statistic pair plus non-fatal diagnostics raised while computing it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStatistics {
    pub pair: StatPair,
    pub warnings: Vec<String>,
}

/// Per-mediator path-a knockoffs. Column `j` is drawn jointly with the
/// confounders from a Gaussian model of `(M_j, V)`; the confounder knockoffs
/// are discarded. (Holding `V` fixed instead would put a single free column
/// on the equi-correlated boundary, where its knockoff is a deterministic
/// reflection of `M_j` about `E[M_j | V]`.)
#[derive(Debug, Clone, PartialEq)]
pub struct PathAKnockoffs {
    pub knockoffs: DMatrix<f64>,
    /// Mediators whose model could not be estimated; their knockoff is a copy
    /// of the original so both statistics tie.
    pub degenerate: Vec<usize>,
}

pub fn patha_knockoffs<R: Rng + ?Sized>(
    data: &Dataset,
    shrinkage: Option<f64>,
    rng: &mut R,
) -> Result<PathAKnockoffs> {
    let (n, p) = data.m.shape();
    let base = next_base_seed(rng);
    let shrink = shrinkage.unwrap_or_else(|| default_shrinkage(n, 1 + data.d()));
    let columns: Vec<Result<Option<DVector<f64>>>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mj = DMatrix::from_column_slice(n, 1, data.m.column(j).as_slice());
            let block = linalg::hstack(&[&mj, &data.v]);
            let mut unit = unit_rng(base, j as u64);
            match second_order_knockoff(&block, shrink, &mut unit) {
                Ok(copy) => Ok(Some(copy.knockoff.column(0).into_owned())),
                Err(Error::DegenerateColumn { .. }) | Err(Error::NotPositiveSemidefinite { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut knockoffs = data.m.clone();
    let mut degenerate = Vec::new();
    for (j, col) in columns.into_iter().enumerate() {
        match col? {
            Some(c) => knockoffs.set_column(j, &c),
            None => degenerate.push(j),
        }
    }
    Ok(PathAKnockoffs { knockoffs, degenerate })
}

/// For each mediator, regresses the exposure on `(M_j, M~_j, V)` and reports
/// the absolute standardized coefficients of `M_j` and `M~_j`. Rank-deficient
/// designs give `(0, 0)` with a warning.
pub fn patha_statistics(data: &Dataset, knockoffs: &DMatrix<f64>) -> Result<PathStatistics> {
    let (n, p) = data.m.shape();
    if knockoffs.shape() != (n, p) {
        return Err(Error::LengthMismatch { expected: p, actual: knockoffs.ncols() });
    }
    let results: Vec<std::result::Result<(f64, f64), String>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut design = DMatrix::zeros(n, 2 + data.d());
            design.set_column(0, &data.m.column(j));
            design.set_column(1, &knockoffs.column(j));
            design.columns_mut(2, data.d()).copy_from(&data.v);
            LeastSquares::new(&design)
                .map(|ls| {
                    let b = ls.standardized_coefficients(&data.x);
                    (b[0].abs(), b[1].abs())
                })
                .map_err(|e| format!("path-a design for mediator {j} is singular ({e}); statistics set to 0"))
        })
        .collect();
    let mut z = Vec::with_capacity(p);
    let mut z_tilde = Vec::with_capacity(p);
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok((a, b)) => {
                z.push(a);
                z_tilde.push(b);
            }
            Err(w) => {
                z.push(0.0);
                z_tilde.push(0.0);
                warnings.push(w);
            }
        }
    }
    Ok(PathStatistics { pair: StatPair { z, z_tilde, path: Path::A, method: StatMethod::Marginal }, warnings })
}

/// Knockoffs of the mediators conditional on confounders and exposure, taken
/// from a joint Gaussian model of `(M, V, X)` in which `V` and `X` are their
/// own knockoffs.
pub fn pathb_knockoffs<R: Rng + ?Sized>(
    data: &Dataset,
    shrinkage: Option<f64>,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let p = data.p();
    let block = linalg::hstack(&[&data.m, &data.adjustment_block()]);
    let (knock, constant) = conditional_knockoff_lenient(&block, p, shrinkage, rng)?;
    let warnings = constant
        .into_iter()
        .map(|j| {
            if j < p {
                format!("mediator {j} is constant; its path-b knockoff copies the original")
            } else {
                format!("adjustment column {} is constant", j - p)
            }
        })
        .collect();
    Ok((knock.columns(0, p).into_owned(), warnings))
}

fn check_knockoff_shape(data: &Dataset, knockoffs: &DMatrix<f64>) -> Result<()> {
    if data.p() == 0 {
        return Err(Error::InsufficientColumns { required: 1, actual: 0 });
    }
    if knockoffs.shape() != data.m.shape() {
        return Err(Error::LengthMismatch { expected: data.p(), actual: knockoffs.ncols() });
    }
    Ok(())
}

fn split_pair(values: &DVector<f64>, p: usize, method: StatMethod) -> StatPair {
    StatPair {
        z: values.rows(0, p).iter().map(|v| v.abs()).collect(),
        z_tilde: values.rows(p, p).iter().map(|v| v.abs()).collect(),
        path: Path::B,
        method,
    }
}

/// Lasso of `Y` on `(M, M~, V, X)` with `V` and `X` unpenalized; statistics
/// are absolute coefficients on the standardized scale.
pub fn pathb_statistics_lasso<R: Rng + ?Sized>(
    data: &Dataset,
    mediator_knockoffs: &DMatrix<f64>,
    lambda_rule: LambdaRule,
    rng: &mut R,
) -> Result<PathStatistics> {
    check_knockoff_shape(data, mediator_knockoffs)?;
    let p = data.p();
    let adjust = data.adjustment_block();
    let design = linalg::hstack(&[&data.m, mediator_knockoffs, &adjust]);
    let (standardized, _, _) = linalg::standardize_columns(&design);
    let mut penalty = vec![1.0; 2 * p];
    penalty.extend(std::iter::repeat(0.0).take(adjust.ncols()));
    let fit = fit_with_rule(&standardized, &data.y, Some(&penalty), lambda_rule, rng)?;
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push(format!("path-b lasso did not converge after {} sweeps", fit.n_iterations));
    }
    Ok(PathStatistics { pair: split_pair(&fit.coefficients, p, StatMethod::Lasso), warnings })
}

/// Forest of `Y` on `(M, M~, V, X)`; statistics are OOB permutation
/// importances of `M_j` and `M~_j`.
pub fn pathb_statistics_rf<R: Rng + ?Sized>(
    data: &Dataset,
    mediator_knockoffs: &DMatrix<f64>,
    config: &ForestConfig,
    rng: &mut R,
) -> Result<PathStatistics> {
    check_knockoff_shape(data, mediator_knockoffs)?;
    let p = data.p();
    let design = linalg::hstack(&[&data.m, mediator_knockoffs, &data.adjustment_block()]);
    let forest = fit_regression_forest(&design, &data.y, config, rng)?;
    let importance = permutation_importance(&forest, &design, &data.y, rng)?;
    Ok(PathStatistics { pair: split_pair(&importance, p, StatMethod::RandomForest), warnings: Vec::new() })
}

/// Residual shortcut for linear models: residualize `Y` and every `M_j` on
/// `(1, X, V)`, build knockoffs of the residual mediator matrix, and run the
/// lasso of the outcome residual on `(r_M, r~_M)`.
pub fn pathb_statistics_pls<R: Rng + ?Sized>(
    data: &Dataset,
    lambda_rule: LambdaRule,
    shrinkage: Option<f64>,
    rng: &mut R,
) -> Result<PathStatistics> {
    let (n, p) = data.m.shape();
    if p == 0 {
        return Err(Error::InsufficientColumns { required: 1, actual: 0 });
    }
    if n <= data.d() + 2 {
        return Err(Error::InsufficientRows { required: data.d() + 3, actual: n });
    }
    let adjust = data.adjustment_block();
    let ls = LeastSquares::new(&adjust)?;
    let r_y = ls.residuals(&data.y);
    let mut r_m = DMatrix::zeros(n, p);
    for j in 0..p {
        r_m.set_column(j, &ls.residuals(&data.m.column(j).into_owned()));
    }
    let (r_knock, constant) = second_order_knockoff_lenient(&r_m, shrinkage, rng)?;
    let mut warnings: Vec<String> = constant
        .into_iter()
        .map(|j| format!("residual of mediator {j} is constant; its knockoff copies the original"))
        .collect();
    let design = linalg::hstack(&[&r_m, &r_knock]);
    let (standardized, _, _) = linalg::standardize_columns(&design);
    let fit = fit_with_rule(&standardized, &r_y, None, lambda_rule, rng)?;
    if !fit.converged {
        warnings.push(format!("residual lasso did not converge after {} sweeps", fit.n_iterations));
    }
    Ok(PathStatistics { pair: split_pair(&fit.coefficients, p, StatMethod::Pls), warnings })
}
