//! End-to-end mediator selection: path-a statistics, path-b statistics,
//! product combination and the knockoff threshold.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::filter::{knockoff_threshold, osff_product, SelectionReport, ThresholdRule};
use crate::rng::{rng_from_seed, stream_seed, Stream};
use crate::statistics::{
    patha_knockoffs, patha_statistics, pathb_knockoffs, pathb_statistics_lasso, pathb_statistics_pls,
    pathb_statistics_rf, ForestConfig, LambdaRule, PathStatistics,
};

/// Minimum rows for data splitting.
pub const MIN_SPLIT_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathBMethod {
    Lasso,
    RandomForest,
    Pls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GkmsConfig {
    pub q: f64,
    pub rule: ThresholdRule,
    pub pathb_method: PathBMethod,
    pub data_split: bool,
    pub split_fraction: f64,
    pub seed: u64,
    /// Covariance shrinkage for estimated knockoff models; `None` picks 0.1
    /// when rows are fewer than five times the modelled dimension, else 0.
    pub shrinkage: Option<f64>,
    pub forest: ForestConfig,
    pub lambda_rule: LambdaRule,
}

impl Default for GkmsConfig {
    fn default() -> Self {
        Self {
            q: 0.2,
            rule: ThresholdRule::KnockoffPlus,
            pathb_method: PathBMethod::Lasso,
            data_split: false,
            split_fraction: 0.5,
            seed: 0,
            shrinkage: None,
            forest: ForestConfig::default(),
            lambda_rule: LambdaRule::default(),
        }
    }
}

impl GkmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidQ(self.q));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction)));
        }
        if let Some(s) = self.shrinkage {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidConfig(format!("shrinkage must lie in [0, 1], got {s}")));
            }
        }
        match self.lambda_rule {
            LambdaRule::Fixed(l) if !(l >= 0.0 && l.is_finite()) => {
                return Err(Error::InvalidConfig(format!("lambda must be finite and non-negative, got {l}")));
            }
            LambdaRule::CrossValidated { folds } if folds < 2 => {
                return Err(Error::InvalidConfig(format!("cross-validation needs at least 2 folds, got {folds}")));
            }
            _ => {}
        }
        self.forest.validate()
    }
}

/// Every intermediate statistic, per mediator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GkmsTrace {
    pub z_a: Vec<f64>,
    pub z_a_tilde: Vec<f64>,
    pub z_b: Vec<f64>,
    pub z_b_tilde: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GkmsResult {
    pub report: SelectionReport,
    pub trace: GkmsTrace,
    /// Row indices used for path a and path b when splitting.
    pub split: Option<(Vec<usize>, Vec<usize>)>,
}

/// Partitions `0..n` into two sorted halves, the first holding
/// `round(n * fraction)` rows.
pub fn split_rows(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng_from_seed(stream_seed(seed, Stream::Split)));
    let n_a = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1));
    let mut a = rows[..n_a].to_vec();
    let mut b = rows[n_a..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Path-a statistics on `data` under `config`'s seed.
pub fn compute_patha(data: &Dataset, config: &GkmsConfig) -> Result<PathStatistics> {
    let mut rng = rng_from_seed(stream_seed(config.seed, Stream::PathA));
    let knock = patha_knockoffs(data, config.shrinkage, &mut rng)?;
    let mut stats = patha_statistics(data, &knock.knockoffs)?;
    for j in knock.degenerate {
        stats.warnings.insert(0, format!("mediator {j}: path-a knockoff model is degenerate"));
    }
    Ok(stats)
}

/// Path-b statistics on `data` under `config`'s method and seed.
pub fn compute_pathb(data: &Dataset, config: &GkmsConfig) -> Result<PathStatistics> {
    let mut rng = rng_from_seed(stream_seed(config.seed, Stream::PathB));
    match config.pathb_method {
        PathBMethod::Pls => pathb_statistics_pls(data, config.lambda_rule, config.shrinkage, &mut rng),
        PathBMethod::Lasso | PathBMethod::RandomForest => {
            let (knock, mut warnings) = pathb_knockoffs(data, config.shrinkage, &mut rng)?;
            let mut stats = if config.pathb_method == PathBMethod::Lasso {
                pathb_statistics_lasso(data, &knock, config.lambda_rule, &mut rng)?
            } else {
                pathb_statistics_rf(data, &knock, &config.forest, &mut rng)?
            };
            warnings.append(&mut stats.warnings);
            stats.warnings = warnings;
            Ok(stats)
        }
    }
}

/// Runs the full selection procedure.
pub fn gkms(data: &Dataset, config: &GkmsConfig) -> Result<GkmsResult> {
    config.validate()?;
    let (patha, pathb, split) = if config.data_split {
        if data.n() < MIN_SPLIT_ROWS {
            return Err(Error::InsufficientRows { required: MIN_SPLIT_ROWS, actual: data.n() });
        }
        let (rows_a, rows_b) = split_rows(data.n(), config.split_fraction, config.seed);
        let a = compute_patha(&data.subset_rows(&rows_a), config)?;
        let b = compute_pathb(&data.subset_rows(&rows_b), config)?;
        (a, b, Some((rows_a, rows_b)))
    } else {
        (compute_patha(data, config)?, compute_pathb(data, config)?, None)
    };

    let w = osff_product(&patha.pair, &pathb.pair)?;
    let mut report = knockoff_threshold(&w, config.q, config.rule)?;
    report.warnings = patha.warnings;
    report.warnings.extend(pathb.warnings);
    let trace = GkmsTrace {
        z_a: patha.pair.z,
        z_a_tilde: patha.pair.z_tilde,
        z_b: pathb.pair.z,
        z_b_tilde: pathb.pair.z_tilde,
        w: w.w,
    };
    Ok(GkmsResult { report, trace, split })
}

/// Scales every mediator column and the outcome to unit root-mean-square
/// without centering; exposure and confounders are left untouched. A zero
/// outcome is reported as column `p`.
pub fn standardize_dataset(data: &Dataset) -> Result<Dataset> {
    let n = data.n() as f64;
    let mut out = data.clone();
    for (j, mut col) in out.m.column_iter_mut().enumerate() {
        let rms = (col.norm_squared() / n).sqrt();
        if !(rms > 0.0) {
            return Err(Error::DegenerateColumn { column: j });
        }
        col.scale_mut(1.0 / rms);
    }
    let rms = (out.y.norm_squared() / n).sqrt();
    if !(rms > 0.0) {
        return Err(Error::DegenerateColumn { column: data.p() });
    }
    out.y.scale_mut(1.0 / rms);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn toy() -> Dataset {
        let m = DMatrix::from_fn(30, 3, |i, j| ((i * (j + 2)) % 7) as f64 + 0.5);
        let x = DVector::from_fn(30, |i, _| (i % 5) as f64);
        let y = DVector::from_fn(30, |i, _| (i % 3) as f64 + 1.0);
        Dataset::without_covariates(x, m, y).unwrap()
    }

    #[test]
    fn standardize_examples() {
        let m = DMatrix::from_column_slice(3, 2, &[2.0, 2.0, 2.0, 1.0, -1.0, 1.0]);
        let data = Dataset::without_covariates(DVector::from_element(3, 7.0), m, DVector::from_element(3, 3.0)).unwrap();
        let s = standardize_dataset(&data).unwrap();
        assert_eq!(s.m.column(0).as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(s.m.column(1).as_slice(), &[1.0, -1.0, 1.0]);
        assert_eq!(s.y.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(s.x, data.x);

        let mut zero = data.clone();
        zero.m.column_mut(1).fill(0.0);
        assert_eq!(standardize_dataset(&zero), Err(Error::DegenerateColumn { column: 1 }));
    }

    #[test]
    fn standardize_is_idempotent() {
        let s = standardize_dataset(&toy()).unwrap();
        let t = standardize_dataset(&s).unwrap();
        for (a, b) in s.m.iter().zip(t.m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let bad_q = GkmsConfig { q: 0.0, ..GkmsConfig::default() };
        assert_eq!(bad_q.validate(), Err(Error::InvalidQ(0.0)));
        let bad_split = GkmsConfig { split_fraction: 1.0, ..GkmsConfig::default() };
        assert!(matches!(bad_split.validate(), Err(Error::InvalidConfig(_))));
        let bad_folds = GkmsConfig { lambda_rule: LambdaRule::CrossValidated { folds: 1 }, ..GkmsConfig::default() };
        assert!(matches!(bad_folds.validate(), Err(Error::InvalidConfig(_))));
        assert!(GkmsConfig::default().validate().is_ok());
    }

    #[test]
    fn split_requires_rows() {
        let data = toy().subset_rows(&(0..10).collect::<Vec<_>>());
        let config = GkmsConfig { data_split: true, ..GkmsConfig::default() };
        assert!(matches!(gkms(&data, &config), Err(Error::InsufficientRows { required: 20, actual: 10 })));
    }

    #[test]
    fn split_rows_partition() {
        let (a, b) = split_rows(31, 0.5, 4);
        assert_eq!(a.len(), 16);
        assert_eq!(b.len(), 15);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..31).collect::<Vec<_>>());
        assert_eq!(split_rows(31, 0.5, 4), (a, b));
    }

    #[test]
    fn config_round_trips_through_json_defaults() {
        let config: GkmsConfig = serde_json::from_str(r#"{"q": 0.1, "pathb_method": "pls"}"#).unwrap();
        assert_eq!(config.q, 0.1);
        assert_eq!(config.pathb_method, PathBMethod::Pls);
        assert_eq!(config.rule, ThresholdRule::KnockoffPlus);
    }
}
