//! Greedy 1-1 matching without replacement, caliper filtering and pruning.
//!
//! The matcher visits treated units in a seeded uniform random order and
//! assigns each to the nearest control not yet used, breaking exact distance
//! ties by the lowest control index. Nearest-neighbor search is a linear
//! scan: every sample in the experiments has at most a few thousand units,
//! so determinism and simplicity win over asymptotics.

use rand::seq::SliceRandom;

use crate::encoders::{encode, pair_distance};
use crate::model::{Encoder, MatchedPair, MatchedPairs, Sample};
use crate::{Error, Result};

/// The seeded uniform visit order over `n_treated` treated slots. Exposed so
/// oracles can replay the exact order a seed produces.
pub fn visit_order(n_treated: usize, order_seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_treated).collect();
    let mut rng = crate::seeds::rng(order_seed, &[0x6d61_7463_68]);
    order.shuffle(&mut rng);
    order
}

/// Greedy matching without replacement.
///
/// Treated units are visited in the random permutation determined by
/// `order_seed`; each takes the nearest unused control under the encoder's
/// pseudo-metric (ties: lowest control index). When controls run out the
/// remaining treated units stay unmatched, so the result has
/// `min(N_t, N_c)` pairs.
pub fn greedy_match(sample: &Sample, encoder: &Encoder, order_seed: u64) -> Result<MatchedPairs> {
    let treated = sample.treated_indices();
    let controls = sample.control_indices();
    if controls.is_empty() {
        return Err(Error::NoControls);
    }
    // center covariates before encoding: distances are unchanged (the common
    // offset cancels) but products no longer carry a large shared magnitude,
    // which keeps this path consistent with the difference-first route in
    // pair_distance even when the encoder amplifies a tiny-variance column
    let centered = {
        let mut m = sample.covariates().clone();
        let mean = m.row_mean();
        for r in 0..m.nrows() {
            m.row_mut(r) -= &mean;
        }
        m
    };
    let encoded = encode(encoder, &centered)?;
    let k = encoded.ncols();

    let mut used = vec![false; controls.len()];
    let mut pairs = Vec::with_capacity(treated.len().min(controls.len()));
    for &slot in &visit_order(treated.len(), order_seed) {
        let t_unit = treated[slot];
        let mut best: Option<(usize, f64)> = None;
        for (c_slot, &c_unit) in controls.iter().enumerate() {
            if used[c_slot] {
                continue;
            }
            let mut sq = 0.0;
            for col in 0..k {
                let diff = encoded[(t_unit, col)] - encoded[(c_unit, col)];
                sq += diff * diff;
            }
            let dist = sq.sqrt();
            // strict < keeps the lowest-index control on ties
            if best.map_or(true, |(_, d)| dist < d) {
                best = Some((c_slot, dist));
            }
        }
        match best {
            Some((c_slot, dist)) => {
                used[c_slot] = true;
                pairs.push(MatchedPair { treated: t_unit, control: controls[c_slot], distance: dist });
            }
            None => break,
        }
    }
    pairs.sort_by_key(|p| p.treated);
    MatchedPairs::new(pairs, encoder.kind(), order_seed)
}

/// Equivalence oracle for [`greedy_match`]: the same contract, but driven by
/// an explicit visit order over treated slots and recomputing each candidate
/// distance through [`pair_distance`] with no shared encoded coordinates.
/// Intended for small samples (≤ 12 treated units).
pub fn brute_force_match(
    sample: &Sample,
    encoder: &Encoder,
    treated_order: &[usize],
) -> Result<MatchedPairs> {
    let treated = sample.treated_indices();
    let controls = sample.control_indices();
    if controls.is_empty() {
        return Err(Error::NoControls);
    }
    if treated_order.len() != treated.len() {
        return Err(Error::DimensionMismatch {
            expected: treated.len(),
            actual: treated_order.len(),
        });
    }
    let mut pairs: Vec<MatchedPair> = Vec::new();
    for &slot in treated_order {
        let t_unit = treated[slot];
        let t_cov = sample.unit_covariates(t_unit);
        let mut best: Option<(usize, f64)> = None;
        for &c_unit in &controls {
            if pairs.iter().any(|p| p.control == c_unit) {
                continue;
            }
            let dist = pair_distance(encoder, &t_cov, &sample.unit_covariates(c_unit))?;
            if best.map_or(true, |(_, d)| dist < d) {
                best = Some((c_unit, dist));
            }
        }
        match best {
            Some((c_unit, dist)) => {
                pairs.push(MatchedPair { treated: t_unit, control: c_unit, distance: dist })
            }
            None => break,
        }
    }
    pairs.sort_by_key(|p| p.treated);
    MatchedPairs::new(pairs, encoder.kind(), 0)
}

/// Keeps exactly the pairs with distance ≤ `delta`. An empty result is
/// allowed; estimators reject it downstream.
pub fn apply_caliper(pairs: &MatchedPairs, delta: f64) -> MatchedPairs {
    let kept: Vec<MatchedPair> =
        pairs.iter().filter(|p| p.distance <= delta).copied().collect();
    pairs.with_pairs(kept).expect("filtering preserves validity")
}

/// Removes the `k` largest-distance pairs, breaking distance ties by
/// removing the higher treated index first. Remaining pairs keep their
/// original order.
pub fn prune_worst(pairs: &MatchedPairs, k: usize) -> Result<MatchedPairs> {
    if k > pairs.len() {
        return Err(Error::KTooLarge { k, available: pairs.len() });
    }
    let mut order: Vec<&MatchedPair> = pairs.iter().collect();
    order.sort_by(|a, b| {
        b.distance
            .partial_cmp(&a.distance)
            .expect("pair distances are finite")
            .then(b.treated.cmp(&a.treated))
    });
    let removed: Vec<usize> = order[..k].iter().map(|p| p.treated).collect();
    let kept: Vec<MatchedPair> =
        pairs.iter().filter(|p| !removed.contains(&p.treated)).copied().collect();
    pairs.with_pairs(kept)
}

/// A reusable pruning plan: the matched pairs ordered worst-first plus the
/// strictly increasing levels (pair counts to prune) a sweep will evaluate.
#[derive(Debug, Clone)]
pub struct PruningSchedule {
    pairs: MatchedPairs,
    levels: Vec<usize>,
}

impl PruningSchedule {
    pub fn new(pairs: MatchedPairs, levels: Vec<usize>) -> Result<Self> {
        for window in levels.windows(2) {
            if window[0] >= window[1] {
                return Err(Error::KTooLarge { k: window[0], available: window[1] });
            }
        }
        if let Some(&deepest) = levels.last() {
            if deepest >= pairs.len() {
                return Err(Error::KTooLarge { k: deepest, available: pairs.len() });
            }
        }
        Ok(PruningSchedule { pairs, levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn pairs(&self) -> &MatchedPairs {
        &self.pairs
    }

    /// The matched set remaining at each level, paired with the level.
    pub fn iter(&self) -> impl Iterator<Item = (usize, MatchedPairs)> + '_ {
        self.levels.iter().map(move |&k| {
            (k, prune_worst(&self.pairs, k).expect("levels validated against pair count"))
        })
    }
}
