//! Regression forest (bagged CART) with out-of-bag permutation importance.
//!
//! Split search works on per-feature bins: each feature's distinct values are
//! cut into at most `max_bins` intervals once per forest, and candidate splits
//! are the bin boundaries. With no more distinct values than bins this is exact
//! CART; otherwise boundaries sit at empirical quantiles.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{next_base_seed, unit_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `max(1, k / 3)`.
    pub mtry: Option<usize>,
    /// Minimum rows in a leaf.
    pub min_node: usize,
    /// Upper bound on candidate split points per feature (2..=256).
    pub max_bins: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 300, mtry: None, min_node: 5, max_bins: 256 }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry.unwrap_or(n_features / 3).clamp(1, n_features.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("forest needs at least one tree".into()));
        }
        if self.min_node == 0 {
            return Err(Error::InvalidConfig("min_node must be at least 1".into()));
        }
        if !(2..=256).contains(&self.max_bins) {
            return Err(Error::InvalidConfig(format!("max_bins must lie in 2..=256, got {}", self.max_bins)));
        }
        if self.mtry == Some(0) {
            return Err(Error::InvalidConfig("mtry must be at least 1".into()));
        }
        Ok(())
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

/// A fitted CART regression tree. Rows go left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_with<F: Fn(usize) -> f64>(&self, value_of: F) -> f64 {
        let mut idx = 0usize;
        loop {
            let node = &self.nodes[idx];
            if node.feature == LEAF {
                return node.value;
            }
            idx = if value_of(node.feature as usize) <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn predict_row(&self, design: &DMatrix<f64>, row: usize) -> f64 {
        self.predict_with(|f| design[(row, f)])
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Sorted, de-duplicated features this tree splits on.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> =
            self.nodes.iter().filter(|n| n.feature != LEAF).map(|n| n.feature as usize).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_node: usize,
    pub trees: Vec<RegressionTree>,
    /// Bootstrap draws (with repetition) used to grow each tree.
    pub bags: Vec<Vec<usize>>,
    /// Rows never drawn for each tree.
    pub oob_indices: Vec<Vec<usize>>,
    pub seed: u64,
    pub n_rows: usize,
    pub n_features: usize,
}

struct Binned {
    codes: Vec<Vec<u8>>,
    thresholds: Vec<Vec<f64>>,
}

impl Binned {
    fn new(design: &DMatrix<f64>, max_bins: usize) -> Self {
        let mut codes = Vec::with_capacity(design.ncols());
        let mut thresholds = Vec::with_capacity(design.ncols());
        for col in design.column_iter() {
            let mut sorted: Vec<f64> = col.iter().copied().collect();
            sorted.sort_unstable_by(|a, b| a.total_cmp(b));
            let mut uniq = sorted.clone();
            uniq.dedup();
            let cuts: Vec<f64> = if uniq.len() <= max_bins {
                uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let n = sorted.len();
                let mut cuts: Vec<f64> = (1..max_bins)
                    .filter_map(|b| {
                        let idx = b * n / max_bins;
                        (idx > 0 && sorted[idx - 1] < sorted[idx]).then(|| 0.5 * (sorted[idx - 1] + sorted[idx]))
                    })
                    .collect();
                cuts.dedup();
                cuts
            };
            codes.push(col.iter().map(|&x| cuts.partition_point(|&t| t < x) as u8).collect());
            thresholds.push(cuts);
        }
        Self { codes, thresholds }
    }
}

struct Split {
    feature: usize,
    bin: usize,
    score: f64,
}

struct TreeBuilder<'a> {
    binned: &'a Binned,
    response: &'a [f64],
    mtry: usize,
    min_node: usize,
    hist_count: Vec<u32>,
    hist_sum: Vec<f64>,
    pairs: Vec<(u8, f64)>,
}

impl<'a> TreeBuilder<'a> {
    fn best_split<R: Rng>(&mut self, samples: &[u32], total: f64, features: &mut [usize], rng: &mut R) -> Option<Split> {
        let n = samples.len();
        let parent = total * total / n as f64;
        let mut best: Option<Split> = None;
        let k = features.len();
        let min_node = self.min_node;
        for i in 0..self.mtry.min(k) {
            let pick = rng.random_range(i..k);
            features.swap(i, pick);
            let f = features[i];
            let n_cuts = self.binned.thresholds[f].len();
            if n_cuts == 0 {
                continue;
            }
            let codes = &self.binned.codes[f];
            let consider = |bin: usize, lc: usize, ls: f64, best: &mut Option<Split>| {
                let rc = n - lc;
                if lc < min_node || rc < min_node {
                    return;
                }
                let rs = total - ls;
                let score = ls * ls / lc as f64 + rs * rs / rc as f64;
                if score > parent + 1e-12 * parent.abs().max(1e-300) && best.as_ref().map_or(true, |b| score > b.score) {
                    *best = Some(Split { feature: f, bin, score });
                }
            };
            if n * 4 < n_cuts {
                self.pairs.clear();
                self.pairs.extend(samples.iter().map(|&r| (codes[r as usize], self.response[r as usize])));
                self.pairs.sort_unstable_by_key(|p| p.0);
                let (mut lc, mut ls) = (0usize, 0.0);
                for w in 0..self.pairs.len() - 1 {
                    lc += 1;
                    ls += self.pairs[w].1;
                    if self.pairs[w].0 != self.pairs[w + 1].0 {
                        consider(self.pairs[w].0 as usize, lc, ls, &mut best);
                    }
                }
            } else {
                let bins = n_cuts + 1;
                self.hist_count[..bins].fill(0);
                self.hist_sum[..bins].fill(0.0);
                for &r in samples {
                    let c = codes[r as usize] as usize;
                    self.hist_count[c] += 1;
                    self.hist_sum[c] += self.response[r as usize];
                }
                let (mut lc, mut ls) = (0usize, 0.0);
                for b in 0..n_cuts {
                    if self.hist_count[b] == 0 {
                        continue;
                    }
                    lc += self.hist_count[b] as usize;
                    ls += self.hist_sum[b];
                    consider(b, lc, ls, &mut best);
                }
            }
        }
        best
    }

    fn grow<R: Rng>(&mut self, mut samples: Vec<u32>, rng: &mut R) -> RegressionTree {
        let k = self.binned.codes.len();
        let mut features: Vec<usize> = (0..k).collect();
        let mut nodes = vec![Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 }];
        let mut stack = vec![(0usize, 0usize, samples.len())];
        while let Some((id, start, end)) = stack.pop() {
            let slice = &mut samples[start..end];
            let n = slice.len();
            let total: f64 = slice.iter().map(|&r| self.response[r as usize]).sum();
            let mean = total / n as f64;
            nodes[id].value = mean;
            if n < 2 * self.min_node {
                continue;
            }
            let sse: f64 = slice.iter().map(|&r| (self.response[r as usize] - mean).powi(2)).sum();
            if sse <= 1e-12 * (1.0 + mean * mean) * n as f64 {
                continue;
            }
            let Some(split) = self.best_split(slice, total, &mut features, rng) else {
                continue;
            };
            let codes = &self.binned.codes[split.feature];
            let mut lo = 0;
            for i in 0..n {
                if (codes[slice[i] as usize] as usize) <= split.bin {
                    slice.swap(lo, i);
                    lo += 1;
                }
            }
            let left = nodes.len();
            nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
            nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
            let node = &mut nodes[id];
            node.feature = split.feature as u32;
            node.threshold = self.binned.thresholds[split.feature][split.bin];
            node.left = left as u32;
            node.right = (left + 1) as u32;
            stack.push((left + 1, start + lo, end));
            stack.push((left, start, start + lo));
        }
        RegressionTree { nodes }
    }
}

/// Grows `config.n_trees` regression trees on bootstrap bags.
pub fn fit_regression_forest<R: Rng + ?Sized>(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    config: &ForestConfig,
    rng: &mut R,
) -> Result<ForestModel> {
    config.validate()?;
    let (n, k) = design.shape();
    if response.len() != n {
        return Err(Error::LengthMismatch { expected: n, actual: response.len() });
    }
    if k == 0 {
        return Err(Error::InsufficientColumns { required: 1, actual: 0 });
    }
    if n < 2 * config.min_node || n < 2 {
        return Err(Error::InsufficientRows { required: (2 * config.min_node).max(2), actual: n });
    }
    if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let seed = next_base_seed(rng);
    let mtry = config.resolved_mtry(k);
    let binned = Binned::new(design, config.max_bins);
    let y = response.as_slice();

    let grown: Vec<(RegressionTree, Vec<usize>, Vec<usize>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut tree_rng = unit_rng(seed, t as u64);
            let mut in_bag = vec![false; n];
            let bag: Vec<usize> = (0..n)
                .map(|_| {
                    let r = tree_rng.random_range(0..n);
                    in_bag[r] = true;
                    r
                })
                .collect();
            let oob: Vec<usize> = (0..n).filter(|&r| !in_bag[r]).collect();
            let mut builder = TreeBuilder {
                binned: &binned,
                response: y,
                mtry,
                min_node: config.min_node,
                hist_count: vec![0; 257],
                hist_sum: vec![0.0; 257],
                pairs: Vec::new(),
            };
            let tree = builder.grow(bag.iter().map(|&r| r as u32).collect(), &mut tree_rng);
            (tree, bag, oob)
        })
        .collect();

    let mut trees = Vec::with_capacity(grown.len());
    let mut bags = Vec::with_capacity(grown.len());
    let mut oob_indices = Vec::with_capacity(grown.len());
    for (tree, bag, oob) in grown {
        trees.push(tree);
        bags.push(bag);
        oob_indices.push(oob);
    }
    Ok(ForestModel {
        n_trees: config.n_trees,
        mtry,
        min_node: config.min_node,
        trees,
        bags,
        oob_indices,
        seed,
        n_rows: n,
        n_features: k,
    })
}

impl ForestModel {
    pub fn predict_with<F: Fn(usize) -> f64>(&self, value_of: F) -> f64 {
        self.trees.iter().map(|t| t.predict_with(&value_of)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(design.nrows(), |i, _| self.predict_with(|f| design[(i, f)]))
    }

    /// Average prediction over trees for which each row is out of bag.
    pub fn oob_predictions(&self, design: &DMatrix<f64>) -> Vec<Option<f64>> {
        let mut sum = vec![0.0; design.nrows()];
        let mut count = vec![0usize; design.nrows()];
        for (tree, oob) in self.trees.iter().zip(&self.oob_indices) {
            for &r in oob {
                sum[r] += tree.predict_row(design, r);
                count[r] += 1;
            }
        }
        sum.into_iter().zip(count).map(|(s, c)| (c > 0).then(|| s / c as f64)).collect()
    }

    /// Out-of-bag R^2 over rows that were out of bag at least once.
    pub fn oob_r_squared(&self, design: &DMatrix<f64>, response: &DVector<f64>) -> f64 {
        let preds = self.oob_predictions(design);
        let pairs: Vec<(f64, f64)> =
            preds.iter().zip(response.iter()).filter_map(|(p, &y)| p.map(|p| (p, y))).collect();
        let mean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
        let sse: f64 = pairs.iter().map(|(p, y)| (y - p).powi(2)).sum();
        let sst: f64 = pairs.iter().map(|(_, y)| (y - mean).powi(2)).sum();
        if sst == 0.0 {
            return if sse == 0.0 { 1.0 } else { 0.0 };
        }
        1.0 - sse / sst
    }
}

/// Out-of-bag permutation importance per feature: for each tree, the increase
/// in OOB mean squared error when the feature's OOB values are shuffled,
/// averaged over trees and floored at zero.
pub fn permutation_importance<R: Rng + ?Sized>(
    model: &ForestModel,
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (n, k) = design.shape();
    if n != model.n_rows || response.len() != n {
        return Err(Error::LengthMismatch { expected: model.n_rows, actual: n });
    }
    if k != model.n_features {
        return Err(Error::LengthMismatch { expected: model.n_features, actual: k });
    }
    let base = next_base_seed(rng);
    let per_tree: Vec<Option<Vec<f64>>> = model
        .trees
        .par_iter()
        .zip(model.oob_indices.par_iter())
        .enumerate()
        .map(|(t, (tree, oob))| {
            if oob.len() < 2 {
                return None;
            }
            let mut tree_rng = unit_rng(base, t as u64);
            let m = oob.len() as f64;
            let baseline: f64 =
                oob.iter().map(|&r| (response[r] - tree.predict_row(design, r)).powi(2)).sum::<f64>() / m;
            let mut diffs = vec![0.0; k];
            let mut perm = oob.clone();
            for f in tree.split_features() {
                perm.copy_from_slice(oob);
                while perm == *oob {
                    perm.shuffle(&mut tree_rng);
                }
                let mse: f64 = oob
                    .iter()
                    .zip(&perm)
                    .map(|(&r, &src)| {
                        let swapped = design[(src, f)];
                        let pred = tree.predict_with(|g| if g == f { swapped } else { design[(r, g)] });
                        (response[r] - pred).powi(2)
                    })
                    .sum::<f64>()
                    / m;
                diffs[f] = mse - baseline;
            }
            Some(diffs)
        })
        .collect();

    let mut total = vec![0.0; k];
    let mut used = 0usize;
    for diffs in per_tree.into_iter().flatten() {
        used += 1;
        for (acc, d) in total.iter_mut().zip(diffs) {
            *acc += d;
        }
    }
    let denom = used.max(1) as f64;
    Ok(DVector::from_iterator(k, total.into_iter().map(|v| (v / denom).max(0.0))))
}
