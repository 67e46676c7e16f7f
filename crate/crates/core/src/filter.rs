//! Combining the two paths' statistics and choosing the selection threshold.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statistics::StatPair;

/// Which stopping rule sets the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Controls the modified FDR.
    Knockoff,
    /// Adds one to the estimated false-discovery count; controls the FDR.
    KnockoffPlus,
}

impl ThresholdRule {
    fn offset(self) -> usize {
        match self {
            ThresholdRule::Knockoff => 0,
            ThresholdRule::KnockoffPlus => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Osff {
    ProductOfDifferences,
}

/// Antisymmetric per-mediator evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WVector {
    pub w: Vec<f64>,
    pub osff: Osff,
}

/// Coordinates whose feature and knockoff statistics are exchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapSet {
    indices: BTreeSet<usize>,
}

impl SwapSet {
    pub fn new(indices: impl IntoIterator<Item = usize>, p: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for j in indices {
            if j >= p {
                return Err(Error::IndexOutOfRange { index: j, len: p });
            }
            set.insert(j);
        }
        Ok(Self { indices: set })
    }

    pub fn empty() -> Self {
        Self { indices: BTreeSet::new() }
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.contains(&j)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }
}

/// Exchanges `z[j]` and `z_tilde[j]` for every `j` in `s`.
pub fn swap(pair: &StatPair, s: &SwapSet) -> Result<StatPair> {
    let mut out = pair.clone();
    for j in s.iter() {
        if j >= pair.len() {
            return Err(Error::IndexOutOfRange { index: j, len: pair.len() });
        }
        std::mem::swap(&mut out.z[j], &mut out.z_tilde[j]);
    }
    Ok(out)
}

/// `W = (Z^a - Z~^a) * (Z^b - Z~^b)` elementwise.
pub fn osff_product(a: &StatPair, b: &StatPair) -> Result<WVector> {
    if a.len() != b.len() || a.z_tilde.len() != a.len() || b.z_tilde.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    let w = a.differences().into_iter().zip(b.differences()).map(|(da, db)| da * db).collect();
    Ok(WVector { w, osff: Osff::ProductOfDifferences })
}

fn tails(w: &[f64], t: f64) -> (usize, usize) {
    let neg = w.iter().filter(|&&v| v <= -t).count();
    let pos = w.iter().filter(|&&v| v >= t).count();
    (neg, pos)
}

/// `#{W_j <= -t} / max(#{W_j >= t}, 1)`.
pub fn fdp_estimate(w: &WVector, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveThreshold(t));
    }
    let (neg, pos) = tails(&w.w, t);
    Ok(neg as f64 / pos.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Selected mediator indices, ascending.
    pub selected: Vec<usize>,
    pub threshold: Option<f64>,
    pub q: f64,
    pub rule: ThresholdRule,
    /// Estimated FDP at the threshold (0 when nothing is selected).
    pub fdp_estimate: f64,
    pub warnings: Vec<String>,
}

/// Smallest `t` among the distinct non-zero magnitudes of `W` whose estimated
/// FDP (with the rule's offset) is at most `q`; selects `{j : W_j >= t}`.
pub fn knockoff_threshold(w: &WVector, q: f64, rule: ThresholdRule) -> Result<SelectionReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQ(q));
    }
    let offset = rule.offset();
    let mut mags: Vec<(f64, bool)> =
        w.w.iter().filter(|v| **v != 0.0 && !v.is_nan()).map(|&v| (v.abs(), v > 0.0)).collect();
    mags.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // Walk the candidates upwards; counts of W >= t and W <= -t shrink as t grows.
    let mut pos = mags.iter().filter(|m| m.1).count();
    let mut neg = mags.len() - pos;
    let mut threshold = None;
    let mut i = 0;
    while i < mags.len() {
        let t = mags[i].0;
        if (offset + neg) as f64 <= q * pos.max(1) as f64 {
            threshold = Some(t);
            break;
        }
        while i < mags.len() && mags[i].0 == t {
            if mags[i].1 {
                pos -= 1;
            } else {
                neg -= 1;
            }
            i += 1;
        }
    }

    let (selected, fdp) = match threshold {
        Some(t) => {
            let selected = w.w.iter().enumerate().filter(|(_, &v)| v >= t).map(|(j, _)| j).collect();
            (selected, fdp_estimate(w, t)?)
        }
        None => (Vec::new(), 0.0),
    };
    Ok(SelectionReport { selected, threshold, q, rule, fdp_estimate: fdp, warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::{Path, StatMethod};
    use proptest::prelude::*;

    fn pair(z: &[f64], zt: &[f64]) -> StatPair {
        StatPair { z: z.to_vec(), z_tilde: zt.to_vec(), path: Path::A, method: StatMethod::Marginal }
    }

    fn wv(w: &[f64]) -> WVector {
        WVector { w: w.to_vec(), osff: Osff::ProductOfDifferences }
    }

    /// Brute force: try every distinct positive magnitude, smallest first.
    fn brute_force(w: &[f64], q: f64, rule: ThresholdRule) -> (Option<f64>, Vec<usize>) {
        let offset = if rule == ThresholdRule::KnockoffPlus { 1.0 } else { 0.0 };
        let mut cands: Vec<f64> = w.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for t in cands {
            let neg = w.iter().filter(|&&v| v <= -t).count() as f64;
            let pos = w.iter().filter(|&&v| v >= t).count() as f64;
            if (offset + neg) / pos.max(1.0) <= q {
                return (Some(t), (0..w.len()).filter(|&j| w[j] >= t).collect());
            }
        }
        (None, vec![])
    }

    #[test]
    fn swap_examples() {
        let p = pair(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(swap(&p, &SwapSet::empty()).unwrap(), p);
        let all = SwapSet::new(0..2, 2).unwrap();
        assert_eq!(swap(&swap(&p, &all).unwrap(), &all).unwrap(), p);
        let one = SwapSet::new([0], 2).unwrap();
        let s = swap(&p, &one).unwrap();
        assert_eq!(s.z, vec![3.0, 2.0]);
        assert_eq!(s.z_tilde, vec![1.0, 4.0]);
        assert!(matches!(SwapSet::new([2], 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn osff_examples() {
        let a = pair(&[1.0, 2.0], &[1.0, 2.0]);
        let b = pair(&[5.0, 0.0], &[1.0, 3.0]);
        assert_eq!(osff_product(&a, &b).unwrap().w, vec![0.0, 0.0]);
        let a = pair(&[3.0, 0.0], &[1.0, 1.0]);
        let b = pair(&[4.0, 5.0], &[1.0, 2.0]);
        assert_eq!(osff_product(&a, &b).unwrap().w, vec![6.0, -3.0]);
        let flipped = osff_product(&swap(&a, &SwapSet::new([0], 2).unwrap()).unwrap(), &b).unwrap();
        assert_eq!(flipped.w, vec![-6.0, -3.0]);
        let short = pair(&[1.0], &[1.0]);
        assert!(matches!(osff_product(&a, &short), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn fdp_examples() {
        let w = wv(&[3.0, -1.0, 2.0, -2.0, 5.0, 1.0]);
        assert!((fdp_estimate(&w, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(fdp_estimate(&wv(&[1.0, 2.0, 3.0]), 1.0).unwrap(), 0.0);
        assert_eq!(fdp_estimate(&wv(&[-1.0, -2.0]), 1.0).unwrap(), 2.0);
        assert_eq!(fdp_estimate(&w, 0.0), Err(Error::NonPositiveThreshold(0.0)));
    }

    #[test]
    fn threshold_examples() {
        let w = wv(&[3.0, -1.0, 2.0, -2.0, 5.0, 1.0]);
        let r = knockoff_threshold(&w, 0.5, ThresholdRule::KnockoffPlus).unwrap();
        assert_eq!(r.threshold, Some(3.0));
        assert_eq!(r.selected, vec![0, 4]);

        let r = knockoff_threshold(&wv(&[-1.0, -2.0, -0.5]), 0.2, ThresholdRule::Knockoff).unwrap();
        assert_eq!(r.threshold, None);
        assert!(r.selected.is_empty());

        let r = knockoff_threshold(&wv(&[5.0]), 0.5, ThresholdRule::Knockoff).unwrap();
        assert_eq!(r.threshold, Some(5.0));
        assert_eq!(r.selected, vec![0]);

        assert_eq!(knockoff_threshold(&w, 1.0, ThresholdRule::Knockoff), Err(Error::InvalidQ(1.0)));
    }

    #[test]
    fn zeros_and_ties() {
        let w = wv(&[0.0, 0.0, 2.0, 2.0, -2.0, 4.0]);
        let r = knockoff_threshold(&w, 0.5, ThresholdRule::Knockoff).unwrap();
        assert_eq!(r.threshold, Some(2.0));
        assert_eq!(r.selected, vec![2, 3, 5]);
        let zeros = knockoff_threshold(&wv(&[0.0, 0.0]), 0.5, ThresholdRule::Knockoff).unwrap();
        assert!(zeros.selected.is_empty());
    }

    fn w_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), (-4i32..=4).prop_map(|v| v as f64), -5.0f64..5.0], 1..=12)
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in w_strategy(), qi in 0usize..3, plus in any::<bool>()) {
            let q = [0.1, 0.2, 0.5][qi];
            let rule = if plus { ThresholdRule::KnockoffPlus } else { ThresholdRule::Knockoff };
            let r = knockoff_threshold(&wv(&w), q, rule).unwrap();
            let (t, sel) = brute_force(&w, q, rule);
            prop_assert_eq!(r.threshold, t);
            prop_assert_eq!(r.selected, sel);
        }

        #[test]
        fn selection_grows_with_q(w in w_strategy(), plus in any::<bool>()) {
            let rule = if plus { ThresholdRule::KnockoffPlus } else { ThresholdRule::Knockoff };
            let small = knockoff_threshold(&wv(&w), 0.1, rule).unwrap();
            let large = knockoff_threshold(&wv(&w), 0.5, rule).unwrap();
            prop_assert!(small.selected.iter().all(|j| large.selected.contains(j)));
        }

        #[test]
        fn plus_is_more_conservative(w in w_strategy(), qi in 0usize..3) {
            let q = [0.1, 0.2, 0.5][qi];
            let plus = knockoff_threshold(&wv(&w), q, ThresholdRule::KnockoffPlus).unwrap();
            let base = knockoff_threshold(&wv(&w), q, ThresholdRule::Knockoff).unwrap();
            prop_assert!(plus.selected.iter().all(|j| base.selected.contains(j)));
        }

        #[test]
        fn swapping_flips_exactly_the_swapped_signs(
            za in prop::collection::vec(0.0f64..3.0, 6),
            zat in prop::collection::vec(0.0f64..3.0, 6),
            zb in prop::collection::vec(0.0f64..3.0, 6),
            zbt in prop::collection::vec(0.0f64..3.0, 6),
            mask in prop::collection::vec(any::<bool>(), 6),
            on_a in any::<bool>(),
        ) {
            let a = pair(&za, &zat);
            let b = pair(&zb, &zbt);
            let s = SwapSet::new((0..6).filter(|&j| mask[j]), 6).unwrap();
            let w = osff_product(&a, &b).unwrap();
            let swapped = if on_a {
                osff_product(&swap(&a, &s).unwrap(), &b).unwrap()
            } else {
                osff_product(&a, &swap(&b, &s).unwrap()).unwrap()
            };
            for j in 0..6 {
                let expected = if s.contains(j) { -w.w[j] } else { w.w[j] };
                prop_assert_eq!(swapped.w[j], expected);
            }
        }
    }
}
