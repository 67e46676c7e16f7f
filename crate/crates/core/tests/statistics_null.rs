//! Sign balance of feature-minus-knockoff statistics for null mediators and
//! detection of strong ones.

use knockmed::statistics::{
    patha_knockoffs, patha_statistics, pathb_knockoffs, pathb_statistics_lasso, pathb_statistics_pls,
    pathb_statistics_rf, ForestConfig, LambdaRule,
};
use knockmed::rng::{derive_seed, KnockRng};
use knockmed::simulation::{generate, Setting, SimulationConfig};
use knockmed::{rng_from_seed, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn normals(rng: &mut KnockRng, n: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn noise(rng: &mut KnockRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Fraction of strictly positive differences among non-tied pairs.
fn positive_share(diffs: &[f64]) -> f64 {
    let decided: Vec<&f64> = diffs.iter().filter(|d| **d != 0.0).collect();
    decided.iter().filter(|d| ***d > 0.0).count() as f64 / decided.len() as f64
}

#[test]
fn patha_global_null_is_balanced() {
    let mut diffs = Vec::new();
    for seed in 0..200 {
        let mut rng = rng_from_seed(derive_seed(1, seed));
        let n = 10_000;
        let m = normals(&mut rng, n, 5);
        let x = noise(&mut rng, n);
        let v = DMatrix::from_fn(n, 1, |i, _| 0.5 * x[i] + rng.sample::<f64, _>(StandardNormal));
        let y = noise(&mut rng, n);
        let data = Dataset::new(x, v, m, y).unwrap();
        let knock = patha_knockoffs(&data, None, &mut rng).unwrap();
        diffs.extend(patha_statistics(&data, &knock.knockoffs).unwrap().pair.differences());
    }
    let share = positive_share(&diffs);
    assert!((share - 0.5).abs() <= 0.05, "share {share}");
}

#[test]
fn pathb_lasso_global_null_is_balanced() {
    let mut diffs = Vec::new();
    for seed in 0..200 {
        let mut rng = rng_from_seed(derive_seed(2, seed));
        let n = 300;
        let x = noise(&mut rng, n);
        let m = DMatrix::from_fn(n, 10, |i, _| 0.3 * x[i] + rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| x[i] + rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::without_covariates(x, m, y).unwrap();
        let (knock, _) = pathb_knockoffs(&data, None, &mut rng).unwrap();
        let stats = pathb_statistics_lasso(&data, &knock, LambdaRule::default(), &mut rng).unwrap();
        diffs.extend(stats.pair.differences());
    }
    let share = positive_share(&diffs);
    assert!((share - 0.5).abs() <= 0.05, "share {share} over {} decided pairs", diffs.len());
}

#[test]
fn pathb_lasso_detects_a_strong_mediator() {
    let mut wins = 0;
    for seed in 0..100 {
        let mut rng = rng_from_seed(derive_seed(3, seed));
        let n = 1000;
        let x = noise(&mut rng, n);
        let m = DMatrix::from_fn(n, 20, |i, _| 0.5 * x[i] + rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| 5.0 * m[(i, 0)] + x[i] + rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::without_covariates(x, m, y).unwrap();
        let (knock, _) = pathb_knockoffs(&data, None, &mut rng).unwrap();
        let pair = pathb_statistics_lasso(&data, &knock, LambdaRule::default(), &mut rng).unwrap().pair;
        if pair.z[0] > pair.z_tilde[0] {
            wins += 1;
        }
    }
    assert!(wins >= 95, "wins {wins}");
}

#[test]
fn pathb_forest_detects_pure_interaction() {
    let config = ForestConfig { n_trees: 200, ..ForestConfig::default() };
    let mut wins = 0;
    for seed in 0..100 {
        let mut rng = rng_from_seed(derive_seed(4, seed));
        let n = 1000;
        let x = noise(&mut rng, n);
        let m = normals(&mut rng, n, 6);
        let y = DVector::from_fn(n, |i, _| m[(i, 0)] * m[(i, 1)] + 0.5 * rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::without_covariates(x, m, y).unwrap();
        let (knock, _) = pathb_knockoffs(&data, None, &mut rng).unwrap();
        let pair = pathb_statistics_rf(&data, &knock, &config, &mut rng).unwrap().pair;
        if pair.z[0] > pair.z_tilde[0] && pair.z[1] > pair.z_tilde[1] {
            wins += 1;
        }
    }
    assert!(wins >= 90, "wins {wins}");
}

#[test]
fn pathb_forest_global_null_is_balanced() {
    let config = ForestConfig { n_trees: 100, ..ForestConfig::default() };
    let mut diffs = Vec::new();
    for seed in 0..100 {
        let mut rng = rng_from_seed(derive_seed(5, seed));
        let n = 300;
        let x = noise(&mut rng, n);
        let m = DMatrix::from_fn(n, 10, |i, _| 0.3 * x[i] + rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| x[i] + rng.sample::<f64, _>(StandardNormal));
        let data = Dataset::without_covariates(x, m, y).unwrap();
        let (knock, _) = pathb_knockoffs(&data, None, &mut rng).unwrap();
        diffs.extend(pathb_statistics_rf(&data, &knock, &config, &mut rng).unwrap().pair.differences());
    }
    let share = positive_share(&diffs);
    assert!((share - 0.5).abs() <= 0.05, "share {share} over {} decided pairs", diffs.len());
}

#[test]
fn pls_with_outcome_equal_to_exposure_is_flat() {
    let mut rng = rng_from_seed(6);
    let n = 400;
    let x = noise(&mut rng, n);
    let m = DMatrix::from_fn(n, 8, |i, _| 0.5 * x[i] + rng.sample::<f64, _>(StandardNormal));
    let data = Dataset::without_covariates(x.clone(), m, x).unwrap();
    let pair = pathb_statistics_pls(&data, LambdaRule::default(), None, &mut rng).unwrap().pair;
    assert!(pair.z.iter().chain(&pair.z_tilde).all(|v| v.abs() < 1e-8));
}

#[test]
fn pls_finds_linear_true_mediators() {
    let sim = SimulationConfig::new(Setting::Linear, 500, 100, 0.2, 0.5, 0.5);
    let mut positive = 0;
    let mut total = 0;
    for seed in 0..20 {
        let mut rng = rng_from_seed(derive_seed(7, seed));
        let (data, truth) = generate(&sim, &mut rng).unwrap();
        let pair = pathb_statistics_pls(&data, LambdaRule::default(), None, &mut rng).unwrap().pair;
        for &j in &truth.true_mediators {
            total += 1;
            if pair.z[j] > pair.z_tilde[j] {
                positive += 1;
            }
        }
    }
    let share = positive as f64 / total as f64;
    assert!(share >= 0.9, "share {share}");
}
