//! Model-X Gaussian knockoffs.
//!
//! Given rows `x ~ N(mu, Sigma)`, a knockoff row is drawn from
//! `N(x - (x - mu) Sigma^-1 diag(s), 2 diag(s) - diag(s) Sigma^-1 diag(s))`, which
//! makes the joint covariance of `[X | X~]` equal to
//! `[[Sigma, Sigma - diag(s)], [Sigma - diag(s), Sigma]]`. The diagonal `s` is
//! the equi-correlated choice `min(2 lambda_min(R), 1)` on the correlation
//! scale.
//!
//! When only the leading columns need knockoffs and the rest are conditioning
//! variables, the trailing entries of `s` are zero (those columns are their
//! own knockoffs) and the leading ones are equi-correlated with respect to
//! the conditional covariance of the leading block given the rest.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues of the correlation matrix below this are an error.
const PSD_TOL: f64 = 1e-8;
const JITTER_ATTEMPTS: usize = 3;
const JITTER_SCALE: f64 = 1e-10;
const CONDITIONAL_SCALE: f64 = 1.85;

/// Gaussian feature model plus the knockoff diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub s: DVector<f64>,
}

impl GaussianModel {
    /// Builds a model with the equi-correlated `s`.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if mu.len() != sigma.nrows() || sigma.nrows() != sigma.ncols() {
            return Err(Error::LengthMismatch { expected: sigma.nrows(), actual: mu.len() });
        }
        let s = equicorrelated_s(&sigma)?;
        Ok(Self { mu, sigma, s })
    }

    /// Model whose first `n_free` columns get knockoffs; the remaining
    /// columns are conditioned on and copied unchanged.
    pub fn conditional(mu: DVector<f64>, sigma: DMatrix<f64>, n_free: usize) -> Result<Self> {
        if mu.len() != sigma.nrows() || sigma.nrows() != sigma.ncols() {
            return Err(Error::LengthMismatch { expected: sigma.nrows(), actual: mu.len() });
        }
        let s = conditional_equicorrelated_s(&sigma, n_free)?;
        Ok(Self { mu, sigma, s })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `2 diag(s) - diag(s) Sigma^-1 diag(s)`.
    pub fn conditional_covariance(&self) -> Result<DMatrix<f64>> {
        let m = self.dim();
        if self.s.iter().all(|&v| v == 0.0) {
            return Ok(DMatrix::zeros(m, m));
        }
        let inv = invert_covariance(&self.sigma)?;
        let mut v = DMatrix::from_fn(m, m, |i, j| -self.s[i] * inv[(i, j)] * self.s[j]);
        for j in 0..m {
            v[(j, j)] += 2.0 * self.s[j];
        }
        linalg::symmetrize(&mut v);
        Ok(v)
    }

    /// Joint covariance of `[X | X~]` implied by the model.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut g = DMatrix::zeros(2 * m, 2 * m);
        let mut off = self.sigma.clone();
        for j in 0..m {
            off[(j, j)] -= self.s[j];
        }
        g.view_mut((0, 0), (m, m)).copy_from(&self.sigma);
        g.view_mut((m, m), (m, m)).copy_from(&self.sigma);
        g.view_mut((0, m), (m, m)).copy_from(&off);
        g.view_mut((m, 0), (m, m)).copy_from(&off);
        g
    }
}

/// Original rows paired with their knockoff rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffCopy {
    pub original: DMatrix<f64>,
    pub knockoff: DMatrix<f64>,
    /// `column_map[j]` is the original column mirrored by knockoff column `j`.
    pub column_map: Vec<usize>,
}

impl KnockoffCopy {
    /// `[original | knockoff]`.
    pub fn concatenated(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.original, &self.knockoff])
    }
}

fn invert_covariance(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = sigma.clone().cholesky() {
        return Ok(chol.inverse());
    }
    sigma
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|_| Error::NotPositiveSemidefinite { min_eigenvalue: f64::NAN })
}

/// Equi-correlated knockoff diagonal: `s_j = min(2 lambda_min(R), 1) * sigma_jj`
/// where `R` is the correlation matrix of `sigma`.
pub fn equicorrelated_s(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = sigma.nrows();
    if sigma.ncols() != m {
        return Err(Error::LengthMismatch { expected: m, actual: sigma.ncols() });
    }
    if !linalg::all_finite(sigma) {
        return Err(Error::NonFiniteInput);
    }
    if m == 0 {
        return Ok(DVector::zeros(0));
    }
    let diag = sigma.diagonal();
    if let Some(j) = diag.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateColumn { column: j });
    }
    let inv_sd = diag.map(|v| 1.0 / v.sqrt());
    let mut corr = DMatrix::from_fn(m, m, |i, j| sigma[(i, j)] * inv_sd[i] * inv_sd[j]);
    linalg::symmetrize(&mut corr);
    let eigen = corr.symmetric_eigen();
    let lambda_min = eigen.eigenvalues.min();
    if lambda_min < -PSD_TOL {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: lambda_min });
    }
    let lambda_min = lambda_min.max(0.0);
    let s_corr = (2.0 * lambda_min).min(1.0);
    // On the correlation scale V has eigenvalues 2 s - s^2 / lambda_i, smallest at lambda_min.
    if lambda_min > 0.0 {
        let v_min = 2.0 * s_corr - s_corr * s_corr / lambda_min;
        if v_min < -PSD_TOL {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: v_min });
        }
    }
    Ok(diag.map(|v| s_corr * v))
}

/// Diagonal for the first `n_free` columns given the rest: `s_j = c * sigma_jj`
/// where `R_c` is the conditional covariance of the free block scaled by its
/// marginal variances and `c = min(1, 1.85 lambda_min(R_c))`. Along the
/// weakest direction the knockoff variance `2c - c^2 / lambda_min` then stays
/// above a quarter of its largest attainable value; the equi-correlated
/// `c = 2 lambda_min` would instead make that direction a deterministic
/// reflection of the originals about the conditioning columns. Entries past
/// `n_free` are zero.
pub fn conditional_equicorrelated_s(sigma: &DMatrix<f64>, n_free: usize) -> Result<DVector<f64>> {
    let m = sigma.nrows();
    if sigma.ncols() != m {
        return Err(Error::LengthMismatch { expected: m, actual: sigma.ncols() });
    }
    if n_free > m {
        return Err(Error::IndexOutOfRange { index: n_free, len: m });
    }
    if n_free == m {
        return equicorrelated_s(sigma);
    }
    if !linalg::all_finite(sigma) {
        return Err(Error::NonFiniteInput);
    }
    let diag = sigma.diagonal();
    if let Some(j) = diag.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateColumn { column: j });
    }
    let mut s = DVector::zeros(m);
    if n_free == 0 {
        return Ok(s);
    }
    let k = m - n_free;
    let s_ff = sigma.view((0, 0), (n_free, n_free));
    let s_fc = sigma.view((0, n_free), (n_free, k));
    let s_cc_inv = invert_covariance(&sigma.view((n_free, n_free), (k, k)).into_owned())?;
    let cond = s_ff - s_fc * s_cc_inv * s_fc.transpose();
    let inv_sd: Vec<f64> = (0..n_free).map(|j| 1.0 / diag[j].sqrt()).collect();
    let mut scaled = DMatrix::from_fn(n_free, n_free, |i, j| cond[(i, j)] * inv_sd[i] * inv_sd[j]);
    linalg::symmetrize(&mut scaled);
    let lambda_min = scaled.symmetric_eigen().eigenvalues.min();
    if lambda_min < -PSD_TOL {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: lambda_min });
    }
    let c = (CONDITIONAL_SCALE * lambda_min.max(0.0)).min(1.0);
    for j in 0..n_free {
        s[j] = c * diag[j];
    }
    Ok(s)
}

/// Default covariance shrinkage for an estimated model: 0.1 when `n < 5 m`.
pub fn default_shrinkage(n: usize, m: usize) -> f64 {
    if n < 5 * m {
        0.1
    } else {
        0.0
    }
}

/// Fits `mu` and a (optionally shrunk) covariance to the rows of `data`.
pub fn estimate_gaussian_model(data: &DMatrix<f64>, shrinkage: f64) -> Result<GaussianModel> {
    let (mu, sigma) = estimate_moments(data, shrinkage)?;
    GaussianModel::new(mu, sigma)
}

/// Like [`estimate_gaussian_model`] with only the first `n_free` columns
/// receiving knockoffs.
pub fn estimate_conditional_model(data: &DMatrix<f64>, n_free: usize, shrinkage: f64) -> Result<GaussianModel> {
    let (mu, sigma) = estimate_moments(data, shrinkage)?;
    GaussianModel::conditional(mu, sigma, n_free)
}

fn estimate_moments(data: &DMatrix<f64>, shrinkage: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::InvalidConfig(format!("shrinkage must lie in [0, 1], got {shrinkage}")));
    }
    if !linalg::all_finite(data) {
        return Err(Error::NonFiniteInput);
    }
    if data.nrows() < 2 {
        return Err(Error::DegenerateColumn { column: 0 });
    }
    let mu = linalg::column_means(data);
    let mut sigma = linalg::sample_covariance(data);
    for j in 0..sigma.nrows() {
        let var = sigma[(j, j)];
        if var <= 1e-14 * (1.0 + mu[j] * mu[j]) {
            return Err(Error::DegenerateColumn { column: j });
        }
    }
    if shrinkage > 0.0 {
        let k = sigma.nrows();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    sigma[(i, j)] *= 1.0 - shrinkage;
                }
            }
        }
    }
    Ok((mu, sigma))
}

/// Lower Cholesky factor of a PSD matrix, retrying with a small diagonal
/// jitter when round-off breaks the factorization.
fn cholesky_with_jitter(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = v.nrows();
    let trace = v.trace();
    if trace <= 0.0 {
        // A PSD matrix with zero trace is the zero matrix.
        return Ok(DMatrix::zeros(m, m));
    }
    if let Some(chol) = v.clone().cholesky() {
        return Ok(chol.l());
    }
    let base = JITTER_SCALE * trace / m as f64;
    for attempt in 0..JITTER_ATTEMPTS {
        let mut jittered = v.clone();
        let eps = base * 10f64.powi(attempt as i32);
        for j in 0..m {
            jittered[(j, j)] += eps;
        }
        if let Some(chol) = jittered.cholesky() {
            return Ok(chol.l());
        }
    }
    Err(Error::CholeskyFailure { attempts: JITTER_ATTEMPTS })
}

/// Draws one knockoff row per data row from the conditional Gaussian.
pub fn sample_gaussian_knockoff<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    model: &GaussianModel,
    rng: &mut R,
) -> Result<KnockoffCopy> {
    let (n, m) = data.shape();
    if model.dim() != m {
        return Err(Error::LengthMismatch { expected: model.dim(), actual: m });
    }
    let column_map: Vec<usize> = (0..m).collect();
    if model.s.iter().all(|&v| v == 0.0) {
        return Ok(KnockoffCopy { original: data.clone(), knockoff: data.clone(), column_map });
    }

    let inv = invert_covariance(&model.sigma)?;
    // P = Sigma^-1 diag(s); conditional mean = X - (X - mu) P.
    let p = DMatrix::from_fn(m, m, |i, j| inv[(i, j)] * model.s[j]);
    let mut centered = data.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-model.mu[j]);
    }
    let mut knockoff = data - centered * p;

    // Columns with s_j = 0 have zero rows and columns in V; sample the rest.
    let v = model.conditional_covariance()?;
    let live: Vec<usize> = (0..m).filter(|&j| model.s[j] != 0.0).collect();
    let l = cholesky_with_jitter(&DMatrix::from_fn(live.len(), live.len(), |a, b| v[(live[a], live[b])]))?;
    let mut z = DMatrix::zeros(n, live.len());
    for i in 0..n {
        for j in 0..live.len() {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let noise = z * l.transpose();
    for (a, &j) in live.iter().enumerate() {
        let mut col = knockoff.column_mut(j);
        col += noise.column(a);
    }
    Ok(KnockoffCopy { original: data.clone(), knockoff, column_map })
}

/// Estimates a Gaussian model from the data, then samples knockoffs from it.
pub fn second_order_knockoff<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    shrinkage: f64,
    rng: &mut R,
) -> Result<KnockoffCopy> {
    let model = estimate_gaussian_model(data, shrinkage)?;
    sample_gaussian_knockoff(data, &model, rng)
}

/// Second-order knockoffs for a block that may contain constant columns.
/// Constant columns are excluded from the model and copied verbatim into the
/// knockoff, so their feature and knockoff statistics tie. Returns the
/// knockoff matrix and the indices of the passed-through columns.
pub fn second_order_knockoff_lenient<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    shrinkage: Option<f64>,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    conditional_knockoff_lenient(data, data.ncols(), shrinkage, rng)
}

/// Knockoffs of the first `n_free` columns of `data` conditional on the
/// remaining columns, with constant columns handled as in
/// [`second_order_knockoff_lenient`]. Conditioning columns come back
/// unchanged.
pub fn conditional_knockoff_lenient<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    n_free: usize,
    shrinkage: Option<f64>,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if n_free > data.ncols() {
        return Err(Error::IndexOutOfRange { index: n_free, len: data.ncols() });
    }
    let n = data.nrows();
    if n < 2 {
        return Err(Error::DegenerateColumn { column: 0 });
    }
    let means = linalg::column_means(data);
    let mut live = Vec::new();
    let mut constant = Vec::new();
    for (j, col) in data.column_iter().enumerate() {
        let var = col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var > 1e-14 * (1.0 + means[j] * means[j]) {
            live.push(j);
        } else {
            constant.push(j);
        }
    }
    let mut knockoff = data.clone();
    if !live.is_empty() {
        let block = linalg::select_columns(data, &live);
        let shrink = shrinkage.unwrap_or_else(|| default_shrinkage(n, live.len()));
        let live_free = live.iter().filter(|&&j| j < n_free).count();
        let model = estimate_conditional_model(&block, live_free, shrink)?;
        let copy = sample_gaussian_knockoff(&block, &model, rng)?;
        for (k, &j) in live.iter().enumerate() {
            knockoff.set_column(j, &copy.knockoff.column(k));
        }
    }
    Ok((knockoff, constant))
}
