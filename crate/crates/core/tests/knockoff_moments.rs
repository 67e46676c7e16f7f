use knockmed::knockoff::{estimate_gaussian_model, sample_gaussian_knockoff, second_order_knockoff, GaussianModel};
use knockmed::linalg::sample_covariance;
use knockmed::rng_from_seed;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn compound_symmetry(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

fn gaussian_rows<R: Rng>(rng: &mut R, n: usize, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let l = sigma.clone().cholesky().unwrap().l();
    let z = DMatrix::from_fn(n, sigma.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    z * l.transpose()
}

#[test]
fn joint_covariance_matches_g_for_compound_symmetry() {
    let sigma = compound_symmetry(5, 0.5);
    let model = GaussianModel::new(DVector::zeros(5), sigma.clone()).unwrap();
    let mut rng = rng_from_seed(17);
    let data = gaussian_rows(&mut rng, 100_000, &sigma);
    let copy = sample_gaussian_knockoff(&data, &model, &mut rng).unwrap();
    let empirical = sample_covariance(&copy.concatenated());
    let g = model.joint_covariance();
    let worst = (&empirical - &g).abs().max();
    assert!(worst < 0.02, "max deviation {worst}");
}

#[test]
fn estimated_identity_model() {
    let mut rng = rng_from_seed(3);
    let data = DMatrix::from_fn(100_000, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let model = estimate_gaussian_model(&data, 0.0).unwrap();
    assert!((&model.sigma - DMatrix::identity(2, 2)).abs().max() < 0.02);

    let copy = second_order_knockoff(&data, 0.0, &mut rng).unwrap();
    let joint = sample_covariance(&copy.concatenated());
    let worst = (&joint - DMatrix::identity(4, 4)).abs().max();
    assert!(worst < 0.02, "max deviation {worst}");
}

#[test]
fn swapping_a_null_column_preserves_moments() {
    // Column 2 is independent of the others.
    let mut sigma = compound_symmetry(3, 0.6);
    sigma[(0, 2)] = 0.0;
    sigma[(2, 0)] = 0.0;
    sigma[(1, 2)] = 0.0;
    sigma[(2, 1)] = 0.0;
    let model = GaussianModel::new(DVector::zeros(3), sigma.clone()).unwrap();
    let mut rng = rng_from_seed(8);
    let data = gaussian_rows(&mut rng, 100_000, &sigma);
    let copy = sample_gaussian_knockoff(&data, &model, &mut rng).unwrap();
    let joint = copy.concatenated();
    let mut swapped = joint.clone();
    swapped.swap_columns(2, 5);
    let a = sample_covariance(&joint);
    let b = sample_covariance(&swapped);
    assert!((&a - &b).abs().max() < 0.03);
    let mean_gap = (joint.column(2).mean() - joint.column(5).mean()).abs();
    assert!(mean_gap < 0.02);
}
