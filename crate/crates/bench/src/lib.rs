//! Inputs shared by the benchmarks.

use knockmed::{rng_from_seed, KnockRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> KnockRng {
    rng_from_seed(seed)
}

pub fn gaussian_matrix(rng: &mut KnockRng, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal))
}

/// Sparse linear response on the first five columns plus unit noise.
pub fn sparse_response(rng: &mut KnockRng, x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |i, _| {
        (0..x.ncols().min(5)).map(|j| x[(i, j)]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal)
    })
}

/// A knockoff statistic vector with a handful of strong positives.
pub fn w_vector(rng: &mut KnockRng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|j| {
            let noise: f64 = rng.sample(StandardNormal);
            if j % 20 == 0 { 4.0 + noise.abs() } else { noise }
        })
        .collect()
}
