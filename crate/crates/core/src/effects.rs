//! Post-selection effect estimation on the original (knockoff-free) design.
//!
//! `product_effects` multiplies the exposure-to-mediator and
//! mediator-to-outcome OLS coefficients. `gformula_nie` estimates natural
//! indirect effects by Monte Carlo over a linear mediator model and a forest
//! outcome model, holding treatment at the reference level in both arms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{hstack, select_columns, LeastSquares};
use crate::rng::{next_base_seed, unit_rng};
use crate::statistics::{fit_regression_forest, ForestConfig, ForestModel};

pub const DEFAULT_BOOTSTRAP_REPS: usize = 100;
pub const DEFAULT_MC_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMethod {
    ProductOls,
    GformulaRf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub mediator_index: usize,
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub indirect: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub method: EffectMethod,
    /// Bootstrap resamples that produced an estimate.
    pub bootstrap_used: usize,
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval widened to contain the point estimate, and the
/// two-sided bootstrap p-value for a zero effect.
fn bootstrap_summary(point: f64, draws: &[f64]) -> (f64, f64, f64) {
    if draws.is_empty() {
        return (point, point, 1.0);
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = quantile(&sorted, 0.025).min(point);
    let hi = quantile(&sorted, 0.975).max(point);
    let len = sorted.len() as f64;
    let below = sorted.iter().filter(|&&v| v <= 0.0).count() as f64 / len;
    let above = sorted.iter().filter(|&&v| v >= 0.0).count() as f64 / len;
    (lo, hi, (2.0 * below.min(above)).min(1.0))
}

fn check_selected(data: &Dataset, selected: &[usize]) -> Result<()> {
    if selected.is_empty() {
        return Err(Error::InvalidConfig("no mediators selected for effect estimation".into()));
    }
    if let Some(&j) = selected.iter().find(|&&j| j >= data.p()) {
        return Err(Error::IndexOutOfRange { index: j, len: data.p() });
    }
    Ok(())
}

fn bootstrap_rows(n: usize, base: u64, rep: usize) -> Vec<usize> {
    let mut rng = unit_rng(base, rep as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `(alpha, beta)` per selected mediator.
fn product_point(data: &Dataset, selected: &[usize]) -> Result<Vec<(f64, f64)>> {
    let xv = hstack(&[&data.x_matrix(), &data.v]);
    let alpha_fit = LeastSquares::new(&xv)?;
    let m_sel = select_columns(&data.m, selected);
    let outcome_fit = LeastSquares::new(&hstack(&[&xv, &m_sel]))?.fit(&data.y);
    let offset = 1 + data.d();
    Ok(selected
        .iter()
        .enumerate()
        .map(|(idx, &j)| {
            let alpha = alpha_fit.fit(&data.m.column(j).into_owned()).coefficients[0];
            (alpha, outcome_fit.coefficients[offset + idx])
        })
        .collect())
}

/// Product-of-coefficients indirect effects with percentile bootstrap
/// intervals. Bootstrap resamples with a singular design are skipped.
pub fn product_effects<R: Rng + ?Sized>(
    data: &Dataset,
    selected: &[usize],
    bootstrap_reps: usize,
    rng: &mut R,
) -> Result<Vec<EffectEstimate>> {
    check_selected(data, selected)?;
    let required = selected.len() + data.d() + 3;
    if data.n() < required {
        return Err(Error::InsufficientRows { required, actual: data.n() });
    }
    let point = product_point(data, selected)?;
    let base = next_base_seed(rng);
    let boots: Vec<Option<Vec<f64>>> = (0..bootstrap_reps)
        .into_par_iter()
        .map(|r| {
            let sample = data.subset_rows(&bootstrap_rows(data.n(), base, r));
            product_point(&sample, selected).ok().map(|v| v.iter().map(|(a, b)| a * b).collect())
        })
        .collect();
    let boots: Vec<Vec<f64>> = boots.into_iter().flatten().collect();
    Ok(selected
        .iter()
        .enumerate()
        .map(|(idx, &j)| {
            let (alpha, beta) = point[idx];
            let indirect = alpha * beta;
            let draws: Vec<f64> = boots.iter().map(|b| b[idx]).collect();
            let (ci_low, ci_high, p_value) = bootstrap_summary(indirect, &draws);
            EffectEstimate {
                mediator_index: j,
                alpha_hat: alpha,
                beta_hat: beta,
                indirect,
                ci_low,
                ci_high,
                p_value,
                method: EffectMethod::ProductOls,
                bootstrap_used: draws.len(),
            }
        })
        .collect())
}

/// How the two exposure levels of the g-formula contrast are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureContrast {
    /// Exposure must take exactly two values; the smaller is the reference.
    Binary,
    /// Replace the exposure with `1[x > median]` and contrast 0 with 1.
    MedianSplit,
    /// Contrast the raw exposure at two supplied levels.
    Levels { reference: f64, treated: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GFormulaConfig {
    pub mc_draws: usize,
    pub bootstrap_reps: usize,
    pub contrast: ExposureContrast,
    /// Outcome forest. An unset `mtry` means every column is tried at each
    /// split.
    pub forest: ForestConfig,
}

impl Default for GFormulaConfig {
    fn default() -> Self {
        Self {
            mc_draws: DEFAULT_MC_DRAWS,
            bootstrap_reps: DEFAULT_BOOTSTRAP_REPS,
            contrast: ExposureContrast::MedianSplit,
            forest: ForestConfig::default(),
        }
    }
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    quantile(&sorted, 0.5)
}

/// Exposure used by the models and the two contrast levels.
pub fn resolve_exposure(x: &DVector<f64>, contrast: ExposureContrast) -> Result<(DVector<f64>, f64, f64)> {
    match contrast {
        ExposureContrast::Binary => {
            let lo = x.min();
            let hi = x.max();
            if lo == hi || x.iter().any(|&v| v != lo && v != hi) {
                return Err(Error::NonBinaryExposure);
            }
            Ok((x.clone(), lo, hi))
        }
        ExposureContrast::MedianSplit => {
            let med = median(x.as_slice());
            let split = x.map(|v| if v > med { 1.0 } else { 0.0 });
            if split.iter().all(|&v| v == split[0]) {
                return Err(Error::NonBinaryExposure);
            }
            Ok((split, 0.0, 1.0))
        }
        ExposureContrast::Levels { reference, treated } => {
            if !(reference.is_finite() && treated.is_finite()) || reference == treated {
                return Err(Error::InvalidConfig("exposure contrast levels must be finite and distinct".into()));
            }
            Ok((x.clone(), reference, treated))
        }
    }
}

/// Linear model of each selected mediator on `(x, V)`.
struct MediatorModel {
    intercept: f64,
    alpha: f64,
    gamma: Vec<f64>,
    sigma: f64,
}

impl MediatorModel {
    fn mean(&self, x: f64, v: impl Iterator<Item = f64>) -> f64 {
        self.intercept + self.alpha * x + v.zip(&self.gamma).map(|(vi, g)| vi * g).sum::<f64>()
    }
}

struct NiePoint {
    alpha: Vec<f64>,
    nie: Vec<f64>,
}

fn gformula_point(
    data: &Dataset,
    exposure: &DVector<f64>,
    selected: &[usize],
    levels: (f64, f64),
    config: &GFormulaConfig,
    seed: u64,
) -> Result<NiePoint> {
    let n = data.n();
    let d = data.d();
    let xv = hstack(&[&DMatrix::from_column_slice(n, 1, exposure.as_slice()), &data.v]);
    let ls = LeastSquares::new(&xv)?;
    let models: Vec<MediatorModel> = selected
        .iter()
        .map(|&j| {
            let m = data.m.column(j).into_owned();
            let fit = ls.fit(&m);
            let resid = ls.residuals(&m);
            let dof = (n - d - 2).max(1) as f64;
            MediatorModel {
                intercept: fit.intercept,
                alpha: fit.coefficients[0],
                gamma: fit.coefficients.iter().skip(1).copied().collect(),
                sigma: (resid.norm_squared() / dof).sqrt(),
            }
        })
        .collect();

    let m_sel = select_columns(&data.m, selected);
    let design = hstack(&[&m_sel, &data.v, &DMatrix::from_column_slice(n, 1, exposure.as_slice())]);
    let forest_config = ForestConfig { mtry: Some(config.forest.mtry.unwrap_or(design.ncols())), ..config.forest };
    let forest: ForestModel = fit_regression_forest(&design, &data.y, &forest_config, &mut unit_rng(seed, 0))?;

    let s = selected.len();
    let (x0, x1) = levels;
    let mut draws = unit_rng(seed, 1);
    let mut sums = vec![0.0; s];
    let mut m0 = vec![0.0; s];
    let mut m1 = vec![0.0; s];
    let mut row = vec![0.0; s + d + 1];
    for _ in 0..config.mc_draws {
        let i = draws.random_range(0..n);
        for (k, model) in models.iter().enumerate() {
            let e: f64 = draws.sample(StandardNormal);
            let noise = model.sigma * e;
            m0[k] = model.mean(x0, data.v.row(i).iter().copied()) + noise;
            m1[k] = model.mean(x1, data.v.row(i).iter().copied()) + noise;
        }
        row[..s].copy_from_slice(&m0);
        for c in 0..d {
            row[s + c] = data.v[(i, c)];
        }
        row[s + d] = x0;
        let baseline = forest.predict_with(|f| row[f]);
        for k in 0..s {
            row[k] = m1[k];
            sums[k] += forest.predict_with(|f| row[f]) - baseline;
            row[k] = m0[k];
        }
    }
    let draws_f = config.mc_draws.max(1) as f64;
    Ok(NiePoint { alpha: models.iter().map(|m| m.alpha).collect(), nie: sums.iter().map(|s| s / draws_f).collect() })
}

/// Natural indirect effects `E[Y(x0, M_k(x1), M_-k(x0))] - E[Y(x0, M(x0))]`
/// from a forest outcome model refitted on `[M_selected, V, X]`.
pub fn gformula_nie<R: Rng + ?Sized>(
    data: &Dataset,
    selected: &[usize],
    config: &GFormulaConfig,
    rng: &mut R,
) -> Result<Vec<EffectEstimate>> {
    check_selected(data, selected)?;
    if config.mc_draws == 0 {
        return Err(Error::InvalidConfig("mc_draws must be at least 1".into()));
    }
    config.forest.validate()?;
    let (exposure, x0, x1) = resolve_exposure(&data.x, config.contrast)?;
    let base = next_base_seed(rng);
    let point = gformula_point(data, &exposure, selected, (x0, x1), config, unit_rng(base, 0).random())?;
    let boots: Vec<Option<Vec<f64>>> = (0..config.bootstrap_reps)
        .into_par_iter()
        .map(|r| {
            let rows = bootstrap_rows(data.n(), base, r + 1);
            let sample = data.subset_rows(&rows);
            let exp = DVector::from_iterator(rows.len(), rows.iter().map(|&i| exposure[i]));
            let seed = unit_rng(base, r as u64 + 1).random();
            gformula_point(&sample, &exp, selected, (x0, x1), config, seed).ok().map(|p| p.nie)
        })
        .collect();
    let boots: Vec<Vec<f64>> = boots.into_iter().flatten().collect();
    Ok(selected
        .iter()
        .enumerate()
        .map(|(idx, &j)| {
            let alpha = point.alpha[idx];
            let indirect = point.nie[idx];
            let scale = alpha * (x1 - x0);
            let beta = if scale != 0.0 { indirect / scale } else { 0.0 };
            let draws: Vec<f64> = boots.iter().map(|b| b[idx]).collect();
            let (ci_low, ci_high, p_value) = bootstrap_summary(indirect, &draws);
            EffectEstimate {
                mediator_index: j,
                alpha_hat: alpha,
                beta_hat: beta,
                indirect,
                ci_low,
                ci_high,
                p_value,
                method: EffectMethod::GformulaRf,
                bootstrap_used: draws.len(),
            }
        })
        .collect())
}
