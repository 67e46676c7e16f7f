use knockmed::effects::{gformula_nie, product_effects, ExposureContrast, GFormulaConfig};
use knockmed::rng::derive_seed;
use knockmed::{rng_from_seed, Dataset, ForestConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Binary exposure; `M1 = a X + e`, `M2 = e`, `Y = b M1 + 0.5 X + e`.
fn linear_chain(n: usize, a: f64, b: f64, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let x = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
    let m = DMatrix::from_fn(n, 2, |i, j| if j == 0 { a * x[i] } else { 0.0 } + rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| b * m[(i, 0)] + 0.5 * x[i] + rng.sample::<f64, _>(StandardNormal));
    Dataset::without_covariates(x, m, y).unwrap()
}

fn quick_gformula(mc_draws: usize, bootstrap_reps: usize) -> GFormulaConfig {
    GFormulaConfig {
        mc_draws,
        bootstrap_reps,
        contrast: ExposureContrast::Binary,
        forest: ForestConfig { n_trees: 100, ..ForestConfig::default() },
    }
}

#[test]
fn product_interval_covers_zero_without_path_a() {
    let mut covered = 0;
    for seed in 0..100 {
        let data = linear_chain(10_000, 0.0, 1.0, derive_seed(20, seed));
        let est = product_effects(&data, &[0], 100, &mut rng_from_seed(seed)).unwrap();
        if est[0].ci_low <= 0.0 && 0.0 <= est[0].ci_high {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered}");
}

#[test]
fn product_interval_narrows_with_n() {
    let small = product_effects(&linear_chain(500, 0.5, 1.0, 1), &[0], 100, &mut rng_from_seed(1)).unwrap();
    let large = product_effects(&linear_chain(2000, 0.5, 1.0, 1), &[0], 100, &mut rng_from_seed(1)).unwrap();
    assert!(large[0].ci_high - large[0].ci_low < small[0].ci_high - small[0].ci_low);
}

/// `M1 = X + e`, `M2 = e`, `Y = M1 + e`.
fn pure_chain(n: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let x = DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
    let m = DMatrix::from_fn(n, 2, |i, j| if j == 0 { x[i] } else { 0.0 } + 0.5 * rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| m[(i, 0)] + 0.5 * rng.sample::<f64, _>(StandardNormal));
    Dataset::without_covariates(x, m, y).unwrap()
}

#[test]
fn gformula_recovers_linear_product() {
    let data = pure_chain(2000, 7);
    let est = gformula_nie(&data, &[0, 1], &quick_gformula(1000, 20), &mut rng_from_seed(3)).unwrap();
    assert!((est[0].indirect - 1.0).abs() <= 0.15, "{:?}", est[0]);
    // M2 does not respond to the exposure.
    assert!(est[1].ci_low <= 0.0 && 0.0 <= est[1].ci_high, "{:?}", est[1]);
    assert!(est[1].indirect.abs() < 0.1);

    let product = product_effects(&data, &[0, 1], 100, &mut rng_from_seed(3)).unwrap();
    assert!(est[0].ci_low <= product[0].ci_high && product[0].ci_low <= est[0].ci_high);
}

#[test]
fn gformula_is_deterministic() {
    let data = linear_chain(300, 1.0, 1.0, 8);
    let config = quick_gformula(100, 5);
    let a = gformula_nie(&data, &[0], &config, &mut rng_from_seed(4)).unwrap();
    let b = gformula_nie(&data, &[0], &config, &mut rng_from_seed(4)).unwrap();
    assert_eq!(a, b);
}
