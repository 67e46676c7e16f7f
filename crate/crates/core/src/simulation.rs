//! Synthetic mediation settings and the replication harness that measures
//! empirical FDR and power.
//!
//! All three settings draw `(X, V)` bivariate normal with unit variances and
//! covariance 0.5, and `M = X alpha + V eta1 + e1` with compound-symmetric
//! noise. They differ in the outcome model:
//!
//! * `Linear`: `Y = X gamma + M beta + V + e2`, `eta1 = 1`.
//! * `Interaction`: `Y = X gamma + Z delta + e2` where `Z` holds products of
//!   disjoint mediator pairs, `eta1 = 0`.
//! * `Cosine`: `Y = X gamma + sum_j beta_j cos(M_j) + e2`, `eta1 = 0`.
//!
//! Indices here are zero-based; mediators 10..=30 in one-based numbering
//! (`9..30` here) are the true mediators in every setting.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{gkms, GkmsConfig, PathBMethod};
use crate::rng::{rng_from_seed, stream_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Linear,
    Interaction,
    Cosine,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Linear => "linear",
            Setting::Interaction => "interaction",
            Setting::Cosine => "cosine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub setting: Setting,
    pub replications: usize,
    pub seed: u64,
    pub gamma: f64,
    pub sigma_noise: f64,
}

impl SimulationConfig {
    pub fn new(setting: Setting, n: usize, p: usize, rho: f64, a: f64, b: f64) -> Self {
        Self { n, p, rho, a, b, setting, replications: 1, seed: 0, gamma: 1.0, sigma_noise: 0.4 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InsufficientRows { required: 2, actual: self.n });
        }
        if self.p < 40 {
            return Err(Error::InvalidP { p: self.p, reason: "coefficient templates need p >= 40" });
        }
        if self.setting == Setting::Interaction && self.p % 2 != 0 {
            return Err(Error::InvalidP { p: self.p, reason: "interaction setting pairs mediators, p must be even" });
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma_noise >= 0.0) {
            return Err(Error::InvalidConfig(format!("sigma_noise must be non-negative, got {}", self.sigma_noise)));
        }
        Ok(())
    }
}

/// Generating coefficients and the induced set of true mediators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Zero-based indices with non-zero path-a and path-b effects.
    pub true_mediators: Vec<usize>,
    pub alpha: Vec<f64>,
    /// Per-mediator `beta` (linear, cosine) or per-pair `delta` (interaction).
    pub beta_or_delta: Vec<f64>,
    /// Mediators that enter the outcome model.
    pub pathb_support: Vec<usize>,
    pub eta1: f64,
}

impl GroundTruth {
    pub fn is_true(&self, j: usize) -> bool {
        self.true_mediators.binary_search(&j).is_ok()
    }
}

/// Mediator pair multiplied in interaction column `k`: one-based `(M_{2k}, M_{2k+1})`
/// for one-based `k`, wrapping the last column's second index to the first
/// mediator.
pub fn interaction_pair(k: usize, p: usize) -> (usize, usize) {
    (2 * k + 1, (2 * k + 2) % p)
}

fn template(p: usize, blocks: &[(usize, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(p);
    for &(len, value) in blocks {
        out.extend(std::iter::repeat(value).take(len));
    }
    out.resize(p, 0.0);
    out
}

/// Coefficient templates for a setting.
pub fn ground_truth(config: &SimulationConfig) -> Result<GroundTruth> {
    config.validate()?;
    let (p, a, b) = (config.p, config.a, config.b);
    let (alpha, beta_or_delta, support, eta1) = match config.setting {
        Setting::Linear => {
            let alpha = template(p, &[(9, a), (21, 0.7 * a)]);
            let beta = template(p, &[(9, 0.0), (21, 0.7 * b), (10, b)]);
            let support = (0..p).filter(|&j| beta[j] != 0.0).collect();
            (alpha, beta, support, 1.0)
        }
        Setting::Interaction => {
            let alpha = template(p, &[(9, 0.5 * a), (21, a)]);
            let delta = template(p / 2, &[(4, 0.0), (15, b)]);
            let mut support: Vec<usize> = delta
                .iter()
                .enumerate()
                .filter(|(_, &d)| d != 0.0)
                .flat_map(|(k, _)| {
                    let (l, r) = interaction_pair(k, p);
                    [l, r]
                })
                .collect();
            support.sort_unstable();
            support.dedup();
            (alpha, delta, support, 0.0)
        }
        Setting::Cosine => {
            let alpha = template(p, &[(9, a), (21, 0.7 * a)]);
            let beta = template(p, &[(9, 0.0), (21, b), (9, 0.7 * b)]);
            let support = (0..p).filter(|&j| beta[j] != 0.0).collect();
            (alpha, beta, support, 0.0)
        }
    };
    let true_mediators = support.iter().copied().filter(|&j: &usize| alpha[j] != 0.0).collect();
    Ok(GroundTruth { true_mediators, alpha, beta_or_delta, pathb_support: support, eta1 })
}

/// Noise-free part of the outcome for one row.
pub fn outcome_mean(setting: Setting, truth: &GroundTruth, gamma: f64, x: f64, v: f64, m: &[f64]) -> f64 {
    let p = m.len();
    let signal: f64 = match setting {
        Setting::Linear => m.iter().zip(&truth.beta_or_delta).map(|(mj, bj)| mj * bj).sum::<f64>() + v,
        Setting::Interaction => truth
            .beta_or_delta
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != 0.0)
            .map(|(k, d)| {
                let (l, r) = interaction_pair(k, p);
                d * m[l] * m[r]
            })
            .sum(),
        Setting::Cosine => m
            .iter()
            .zip(&truth.beta_or_delta)
            .filter(|(_, &bj)| bj != 0.0)
            .map(|(mj, bj)| bj * mj.cos())
            .sum(),
    };
    x * gamma + signal
}

/// Draws one dataset for `config.setting`.
pub fn generate<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    let truth = ground_truth(config)?;
    let (n, p) = (config.n, config.p);
    let shared = config.rho.sqrt();
    let own = (1.0 - config.rho).sqrt();
    let v_own = 0.75f64.sqrt();
    let mut x = DVector::zeros(n);
    let mut v = DMatrix::zeros(n, 1);
    let mut m = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let xi = z1;
        let vi = 0.5 * z1 + v_own * z2;
        let common: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            let u: f64 = rng.sample(StandardNormal);
            let noise = shared * common + own * u;
            row[j] = xi * truth.alpha[j] + vi * truth.eta1 + noise;
            m[(i, j)] = row[j];
        }
        let e: f64 = rng.sample(StandardNormal);
        x[i] = xi;
        v[(i, 0)] = vi;
        y[i] = outcome_mean(config.setting, &truth, config.gamma, xi, vi, &row) + config.sigma_noise * e;
    }
    Ok((Dataset::new(x, v, m, y)?, truth))
}

pub fn gen_linear<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    generate(&SimulationConfig { setting: Setting::Linear, ..config.clone() }, rng)
}

pub fn gen_interaction<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    generate(&SimulationConfig { setting: Setting::Interaction, ..config.clone() }, rng)
}

pub fn gen_cosine<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<(Dataset, GroundTruth)> {
    generate(&SimulationConfig { setting: Setting::Cosine, ..config.clone() }, rng)
}

/// False discovery proportion and true-positive fraction of one selection.
pub fn selection_quality(selected: &[usize], truth: &GroundTruth) -> (f64, f64) {
    let hits = selected.iter().filter(|&&j| truth.is_true(j)).count();
    let fdp = (selected.len() - hits) as f64 / selected.len().max(1) as f64;
    let power = if truth.true_mediators.is_empty() {
        0.0
    } else {
        hits as f64 / truth.true_mediators.len() as f64
    };
    (fdp, power)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub selected: Vec<usize>,
    pub fdp: f64,
    pub power_fraction: f64,
    /// Set when the pipeline failed; such replications are excluded from the
    /// averages.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMetrics {
    pub fdr: f64,
    pub power: f64,
    pub per_replication: Vec<ReplicationOutcome>,
}

impl EmpiricalMetrics {
    fn successful(&self) -> impl Iterator<Item = &ReplicationOutcome> {
        self.per_replication.iter().filter(|r| r.error.is_none())
    }

    pub fn failures(&self) -> usize {
        self.per_replication.iter().filter(|r| r.error.is_some()).count()
    }

    fn standard_error(&self, f: impl Fn(&ReplicationOutcome) -> f64, mean: f64) -> f64 {
        let vals: Vec<f64> = self.successful().map(f).collect();
        if vals.len() < 2 {
            return 0.0;
        }
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        (var / vals.len() as f64).sqrt()
    }

    pub fn fdr_standard_error(&self) -> f64 {
        self.standard_error(|r| r.fdp, self.fdr)
    }

    pub fn power_standard_error(&self) -> f64 {
        self.standard_error(|r| r.power_fraction, self.power)
    }
}

/// Runs `sim.replications` independent draws through the pipeline.
/// Replication `r` uses seed `sim.seed + r` for both data and pipeline.
pub fn run_replications(sim: &SimulationConfig, gkms_config: &GkmsConfig) -> Result<EmpiricalMetrics> {
    if sim.replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    sim.validate()?;
    gkms_config.validate()?;
    let per_replication: Vec<ReplicationOutcome> = (0..sim.replications)
        .into_par_iter()
        .map(|r| {
            let seed = sim.seed.wrapping_add(r as u64);
            let mut data_rng = rng_from_seed(stream_seed(seed, Stream::Data));
            let outcome = generate(sim, &mut data_rng).and_then(|(data, truth)| {
                let config = GkmsConfig { seed, ..gkms_config.clone() };
                gkms(&data, &config).map(|res| (res.report.selected, truth))
            });
            match outcome {
                Ok((selected, truth)) => {
                    let (fdp, power_fraction) = selection_quality(&selected, &truth);
                    ReplicationOutcome { replication: r, seed, selected, fdp, power_fraction, error: None }
                }
                Err(e) => ReplicationOutcome {
                    replication: r,
                    seed,
                    selected: Vec::new(),
                    fdp: 0.0,
                    power_fraction: 0.0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<&ReplicationOutcome> = per_replication.iter().filter(|r| r.error.is_none()).collect();
    let denom = ok.len().max(1) as f64;
    let fdr = ok.iter().map(|r| r.fdp).sum::<f64>() / denom;
    let power = ok.iter().map(|r| r.power_fraction).sum::<f64>() / denom;
    Ok(EmpiricalMetrics { fdr, power, per_replication })
}

pub fn method_name(method: PathBMethod) -> &'static str {
    match method {
        PathBMethod::Lasso => "lasso",
        PathBMethod::RandomForest => "random_forest",
        PathBMethod::Pls => "pls",
    }
}

/// One line of the per-replication results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub setting: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub method: String,
    pub fdp: f64,
    pub power_fraction: f64,
    pub n_selected: usize,
    pub seed: u64,
}

/// One line of the aggregate results file: one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub setting: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub method: String,
    pub replications: usize,
    pub failures: usize,
    pub fdr: f64,
    pub fdr_se: f64,
    pub power: f64,
    pub power_se: f64,
}

pub fn replication_rows(sim: &SimulationConfig, method: PathBMethod, metrics: &EmpiricalMetrics) -> Vec<ReplicationRow> {
    metrics
        .successful()
        .map(|r| ReplicationRow {
            setting: sim.setting.name().to_string(),
            n: sim.n,
            p: sim.p,
            rho: sim.rho,
            a: sim.a,
            b: sim.b,
            method: method_name(method).to_string(),
            fdp: r.fdp,
            power_fraction: r.power_fraction,
            n_selected: r.selected.len(),
            seed: r.seed,
        })
        .collect()
}

pub fn aggregate_row(sim: &SimulationConfig, method: PathBMethod, metrics: &EmpiricalMetrics) -> AggregateRow {
    AggregateRow {
        setting: sim.setting.name().to_string(),
        n: sim.n,
        p: sim.p,
        rho: sim.rho,
        a: sim.a,
        b: sim.b,
        method: method_name(method).to_string(),
        replications: metrics.per_replication.len(),
        failures: metrics.failures(),
        fdr: metrics.fdr,
        fdr_se: metrics.fdr_standard_error(),
        power: metrics.power,
        power_se: metrics.power_standard_error(),
    }
}

/// Writes rows as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
