//! ATT estimators over raw or matched samples, the 512-specification
//! model-dependence protocol, and the bootstrap.
//!
//! The regression estimator implements parallel regressions on covariates:
//! on the pooled matched sample it fits
//! `Y = β₀ + Fβ + γ₀T + T·(F − F̄)γ + ε` and reports `γ̂₀`, where `F` are the
//! specification's features and `F̄` is their mean over the matched treated
//! units — so `γ̂₀` targets the ATT of the matched treated sample even when
//! the effect varies with the covariates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::kernels::{logistic_fit_ridge, ols_fit, percentile_interval};
use crate::model::{MatchedPairs, Sample};
use crate::{Error, Result};

/// L2 penalty applied by [`plugin_estimate`]'s logistic fit (all
/// coefficients, intercept included). Shrinkage keeps the fit stable on the
/// tiny matched samples the confounding experiment produces and matches the
/// reference results for that experiment.
pub const PLUGIN_LOGISTIC_RIDGE: f64 = 1.0;

/// Mean matched-pair outcome difference: `mean(Y_treated − Y_control)` over
/// the kept pairs.
pub fn diff_means_estimate(sample: &Sample, pairs: &MatchedPairs) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let outcome = sample.outcome();
    let total: f64 = pairs.iter().map(|p| outcome[p.treated] - outcome[p.control]).sum();
    Ok(total / pairs.len() as f64)
}

/// Exact matching estimator: each treated unit's counterfactual is the mean
/// outcome of *all* controls with identical covariates (one-to-mean).
/// Errors with [`Error::UnmatchedTreated`] when some treated unit has no
/// exact control.
pub fn exact_match_estimate(sample: &Sample) -> Result<f64> {
    let controls = sample.control_indices();
    let outcome = sample.outcome();
    let mut total = 0.0;
    let mut count = 0usize;
    for t in sample.treated_indices() {
        let t_row = sample.covariates().row(t);
        let mut sum = 0.0;
        let mut hits = 0usize;
        for &c in &controls {
            if sample.covariates().row(c) == t_row {
                sum += outcome[c];
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(Error::UnmatchedTreated(t));
        }
        total += outcome[t] - sum / hits as f64;
        count += 1;
    }
    Ok(total / count as f64)
}

/// Exponents `(a, b)` of the nine monomials `X1^a·X2^b` with `1 ≤ a+b ≤ 3`,
/// in the fixed enumeration order.
pub const MONOMIAL_EXPONENTS: [(u32, u32); 9] =
    [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

/// One outcome-model feature set: a subset of the nine monomials over
/// `(X1, X2)`, plus optionally the remaining covariates `X3..Xp` entering
/// linearly. Every design built from a specification also includes the
/// intercept and the treatment indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specification {
    mask: u16,
    /// Whether `X3..Xp` enter linearly when `p > 2`.
    pub include_extra_linear: bool,
}

impl Specification {
    /// Builds from a 9-bit monomial mask (bit `i` selects
    /// `MONOMIAL_EXPONENTS[i]`).
    pub fn from_mask(mask: u16) -> Self {
        assert!(mask < 512, "monomial mask has 9 bits");
        Specification { mask, include_extra_linear: true }
    }

    /// The base linear specification {X1, X2}.
    pub fn base_linear() -> Self {
        Specification::from_mask(0b11)
    }

    pub fn mask(&self) -> u16 {
        self.mask
    }

    pub fn without_extra_linear(mut self) -> Self {
        self.include_extra_linear = false;
        self
    }

    /// Selected monomial exponents in enumeration order.
    pub fn monomials(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        MONOMIAL_EXPONENTS
            .iter()
            .enumerate()
            .filter(|(i, _)| self.mask >> i & 1 == 1)
            .map(|(_, &e)| e)
    }

    /// Number of feature columns on a sample with `p` covariates.
    pub fn n_features(&self, p: usize) -> usize {
        let extras = if self.include_extra_linear && p > 2 { p - 2 } else { 0 };
        (self.mask.count_ones() as usize) + extras
    }

    /// Feature matrix for the given rows of a sample.
    fn build_features(&self, sample: &Sample, rows: &[usize]) -> DMatrix<f64> {
        let cov = sample.covariates();
        let p = sample.n_covariates();
        let monos: Vec<(u32, u32)> = self.monomials().collect();
        let extras = if self.include_extra_linear && p > 2 { p - 2 } else { 0 };
        DMatrix::from_fn(rows.len(), monos.len() + extras, |r, c| {
            let unit = rows[r];
            if c < monos.len() {
                let (a, b) = monos[c];
                cov[(unit, 0)].powi(a as i32) * cov[(unit, 1)].powi(b as i32)
            } else {
                cov[(unit, 2 + (c - monos.len()))]
            }
        })
    }
}

/// All 512 feature sets in binary-counting order: mask 0 (intercept and
/// treatment only) through mask 511 (all nine monomials).
pub fn enumerate_specifications() -> Vec<Specification> {
    (0..512).map(Specification::from_mask).collect()
}

/// Parallel regressions on covariates over the pooled matched sample.
///
/// Builds `[1 | F | T | T·(F − F̄_treated)]` over the matched treated units
/// and their controls and returns the coefficient on `T`. Requires `p ≥ 2`
/// for the monomial features.
pub fn regression_estimate(
    sample: &Sample,
    pairs: &MatchedPairs,
    spec: &Specification,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    if sample.n_covariates() < 2 {
        return Err(Error::DimensionMismatch { expected: 2, actual: sample.n_covariates() });
    }
    let rows = pairs.pooled_indices();
    let features = spec.build_features(sample, &rows);
    let nf = features.ncols();
    let n = rows.len();
    let n_treated = pairs.len();

    // interaction centering: mean feature vector over the matched treated,
    // which occupy the first `n_treated` pooled rows
    let mut center = DVector::zeros(nf);
    for r in 0..n_treated {
        for c in 0..nf {
            center[c] += features[(r, c)];
        }
    }
    center /= n_treated as f64;

    let design = DMatrix::from_fn(n, 2 + 2 * nf, |r, c| {
        let t = f64::from(r < n_treated);
        if c == 0 {
            1.0
        } else if c <= nf {
            features[(r, c - 1)]
        } else if c == nf + 1 {
            t
        } else {
            t * (features[(r, c - nf - 2)] - center[c - nf - 2])
        }
    });
    let response = DVector::from_fn(n, |r, _| sample.outcome()[rows[r]]);
    let fit = ols_fit(&design, &response)?;
    Ok(fit.coefficients[nf + 1])
}

/// The plain linear specification `Y = β₀ + βX + γ₀T + ε` on the pooled
/// matched sample, all `p` covariates entering linearly; returns `γ̂₀`.
pub fn simple_regression_estimate(sample: &Sample, pairs: &MatchedPairs) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let rows = pairs.pooled_indices();
    let p = sample.n_covariates();
    let n = rows.len();
    let n_treated = pairs.len();
    let design = DMatrix::from_fn(n, p + 2, |r, c| {
        if c == 0 {
            1.0
        } else if c <= p {
            sample.covariates()[(rows[r], c - 1)]
        } else {
            f64::from(r < n_treated)
        }
    });
    let response = DVector::from_fn(n, |r, _| sample.outcome()[rows[r]]);
    let fit = ols_fit(&design, &response)?;
    Ok(fit.coefficients[p + 1])
}

/// Plug-in contrast for a binary outcome: fit
/// `g(x, t) = logistic(β₀ + βx + γ₀t)` (ridge-penalized, see
/// [`PLUGIN_LOGISTIC_RIDGE`]) and return the mean of `g(X_i,1) − g(X_i,0)`
/// over all units.
pub fn plugin_estimate(sample: &Sample) -> Result<f64> {
    if sample.outcome().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::NonBinaryOutcome);
    }
    let n = sample.n_units();
    let p = sample.n_covariates();
    let design = DMatrix::from_fn(n, p + 2, |r, c| {
        if c == 0 {
            1.0
        } else if c <= p {
            sample.covariates()[(r, c - 1)]
        } else {
            f64::from(sample.treatment()[r])
        }
    });
    let labels: Vec<f64> = sample.outcome().iter().copied().collect();
    let fit = logistic_fit_ridge(&design, &labels, PLUGIN_LOGISTIC_RIDGE)?;
    let beta = &fit.coefficients;
    let gamma = beta[p + 1];
    let mut total = 0.0;
    for r in 0..n {
        let mut base = beta[0];
        for c in 0..p {
            base += beta[c + 1] * sample.covariates()[(r, c)];
        }
        total += sigmoid(base + gamma) - sigmoid(base);
    }
    Ok(total / n as f64)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Estimates across the 512-specification family. A slot is `None` when that
/// specification's design is rank deficient (or has more columns than
/// pooled rows) on the matched sample; the variance and max-|estimate| are
/// computed over the fitted subset.
#[derive(Debug, Clone)]
pub struct ModelDependenceResult {
    pub estimates: Vec<Option<f64>>,
    pub variance: f64,
    pub max_abs: f64,
}

impl ModelDependenceResult {
    pub fn n_fitted(&self) -> usize {
        self.estimates.iter().flatten().count()
    }
}

/// Runs [`regression_estimate`] over all 512 specifications (extra
/// covariates linear by default).
pub fn model_dependence(sample: &Sample, pairs: &MatchedPairs) -> Result<ModelDependenceResult> {
    model_dependence_opts(sample, pairs, true)
}

/// [`model_dependence`] with control over whether `X3..Xp` enter linearly.
pub fn model_dependence_opts(
    sample: &Sample,
    pairs: &MatchedPairs,
    include_extra_linear: bool,
) -> Result<ModelDependenceResult> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let estimates: Vec<Option<f64>> = enumerate_specifications()
        .into_iter()
        .map(|mut spec| {
            spec.include_extra_linear = include_extra_linear;
            regression_estimate(sample, pairs, &spec).ok()
        })
        .collect();
    let fitted: Vec<f64> = estimates.iter().flatten().copied().collect();
    if fitted.is_empty() {
        return Err(Error::EmptyPairs);
    }
    Ok(ModelDependenceResult {
        variance: population_variance(&fitted),
        max_abs: fitted.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        estimates,
    })
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// A percentile bootstrap interval together with replication accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapInterval {
    pub lo: f64,
    pub hi: f64,
    pub succeeded: usize,
    pub failed: usize,
}

/// Percentile bootstrap over whole-unit resamples.
///
/// Each replication draws `N` units with replacement (seeded per replication
/// from `seed`, independent of scheduling) and applies the full estimator
/// pipeline — including any matching step — to the resample. Replications
/// whose pipeline errors are dropped and counted.
pub fn bootstrap_interval<F>(
    sample: &Sample,
    estimator: F,
    replications: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval>
where
    F: Fn(&Sample, u64) -> Result<f64> + Sync,
{
    assert!(replications >= 100, "bootstrap needs at least 100 replications");
    let n = sample.n_units();
    let estimates: Vec<Option<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = crate::seeds::rng(seed, &[0xb007, rep as u64]);
            let indices: Vec<usize> =
                (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
            let resample = sample.subset(&indices).ok()?;
            estimator(&resample, crate::seeds::derive_seed(seed, &[0xb008, rep as u64])).ok()
        })
        .collect();
    let kept: Vec<f64> = estimates.iter().flatten().copied().collect();
    let failed = replications - kept.len();
    if kept.len() < 2 {
        return Err(Error::AllReplicationsFailed(replications));
    }
    let (lo, hi) = percentile_interval(&kept, level)?;
    Ok(BootstrapInterval { lo, hi, succeeded: kept.len(), failed })
}
