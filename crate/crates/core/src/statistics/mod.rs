//! Paired feature/knockoff importance statistics for both mediation paths.

pub mod forest;
pub mod lasso;
mod paths;

use serde::{Deserialize, Serialize};

pub use forest::{fit_regression_forest, permutation_importance, ForestConfig, ForestModel, RegressionTree};
pub use lasso::{
    cross_validated_lasso, lasso_coordinate_descent, LambdaRule, LassoFit, LassoProblem,
};
pub use paths::{
    patha_knockoffs, patha_statistics, pathb_knockoffs, pathb_statistics_lasso, pathb_statistics_pls,
    pathb_statistics_rf, PathAKnockoffs, PathStatistics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Path {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatMethod {
    Marginal,
    Lasso,
    RandomForest,
    Pls,
}

/// Importance of each mediator (`z`) and of its knockoff (`z_tilde`) on one
/// path. Entries are non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatPair {
    pub z: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub path: Path,
    pub method: StatMethod,
}

impl StatPair {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `z - z_tilde`, the signed evidence per mediator.
    pub fn differences(&self) -> Vec<f64> {
        self.z.iter().zip(&self.z_tilde).map(|(a, b)| a - b).collect()
    }
}
