//! Domain types shared across the crate: samples, encoders, matched pairs
//! and scenario ground truth. All types are immutable after construction and
//! validated on construction, so they can be shared freely across workers.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// An observational sample: `N` units with `p` covariates, a binary
/// treatment indicator and an observed outcome per unit. Indices are 0-based
/// everywhere. The intercept is never stored; design matrices are built by
/// consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    covariates: DMatrix<f64>,
    treatment: Vec<u8>,
    outcome: DVector<f64>,
    column_names: Option<Vec<String>>,
}

impl Sample {
    /// Builds a validated sample.
    ///
    /// Requires at least two units with both treatment groups present, all
    /// values finite, and treatment entries in {0, 1}.
    pub fn new(
        covariates: DMatrix<f64>,
        treatment: Vec<f64>,
        outcome: Vec<f64>,
        column_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = covariates.nrows();
        if treatment.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: treatment.len() });
        }
        if outcome.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: outcome.len() });
        }
        if let Some(names) = &column_names {
            if names.len() != covariates.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: covariates.ncols(),
                    actual: names.len(),
                });
            }
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariates"));
        }
        if outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome"));
        }
        let mut indicator = Vec::with_capacity(n);
        for (index, &value) in treatment.iter().enumerate() {
            if value == 0.0 {
                indicator.push(0);
            } else if value == 1.0 {
                indicator.push(1);
            } else {
                return Err(Error::BadTreatment { index, value });
            }
        }
        let sample = Sample {
            covariates,
            treatment: indicator,
            outcome: DVector::from_vec(outcome),
            column_names,
        };
        if sample.n_units() < 2 || sample.treated_indices().is_empty() {
            return Err(Error::EmptyGroup("treated"));
        }
        if sample.control_indices().is_empty() {
            return Err(Error::EmptyGroup("control"));
        }
        Ok(sample)
    }

    pub fn n_units(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    /// Treatment indicators as 0/1.
    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn is_treated(&self, unit: usize) -> bool {
        self.treatment[unit] == 1
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.treatment[i] == 1).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n_units()).filter(|&i| self.treatment[i] == 0).collect()
    }

    /// The covariate vector of one unit.
    pub fn unit_covariates(&self, unit: usize) -> DVector<f64> {
        self.covariates.row(unit).transpose()
    }

    /// A new sample containing `indices` in order (repeats allowed, as in a
    /// bootstrap resample). Fails if the selection loses a treatment group.
    pub fn subset(&self, indices: &[usize]) -> Result<Sample> {
        let cov = DMatrix::from_fn(indices.len(), self.n_covariates(), |r, c| {
            self.covariates[(indices[r], c)]
        });
        let treat = indices.iter().map(|&i| f64::from(self.treatment[i])).collect();
        let out = indices.iter().map(|&i| self.outcome[i]).collect();
        Sample::new(cov, treat, out, self.column_names.clone())
    }
}

/// Re-checks every [`Sample`] invariant and returns the sample unchanged.
/// Idempotent; `Sample::new` already establishes the invariants.
pub fn validate_sample(sample: Sample) -> Result<Sample> {
    let treatment = sample.treatment.iter().map(|&t| f64::from(t)).collect();
    Sample::new(
        sample.covariates.clone(),
        treatment,
        sample.outcome.iter().copied().collect(),
        sample.column_names.clone(),
    )
}

/// The generating truth attached to a synthetic sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// The scenario's true ATT.
    pub att: f64,
    /// Per-unit treatment effects aligned with the sample, when the
    /// generator knows them.
    pub per_unit_effects: Option<Vec<f64>>,
}

impl GroundTruth {
    pub fn new(att: f64, per_unit_effects: Option<Vec<f64>>) -> Result<Self> {
        if !att.is_finite() {
            return Err(Error::NonFinite("ground-truth att"));
        }
        if let Some(effects) = &per_unit_effects {
            if effects.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("per-unit effects"));
            }
        }
        Ok(GroundTruth { att, per_unit_effects })
    }
}

/// Which balancing-score construction produced an encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Identity,
    Propensity,
    Mahalanobis,
    Odm,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 4] =
        [EncoderKind::Identity, EncoderKind::Propensity, EncoderKind::Mahalanobis, EncoderKind::Odm];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Identity => "identity",
            EncoderKind::Propensity => "propensity",
            EncoderKind::Mahalanobis => "mahalanobis",
            EncoderKind::Odm => "odm",
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "identity" => Ok(EncoderKind::Identity),
            "propensity" => Ok(EncoderKind::Propensity),
            "mahalanobis" => Ok(EncoderKind::Mahalanobis),
            "odm" => Ok(EncoderKind::Odm),
            other => Err(format!("unknown encoder kind `{other}`")),
        }
    }
}

/// A linear balancing-score map `X ↦ XA` with `A` of shape `p×k`, `k ≤ p`.
/// The induced pseudo-metric is `d(x, y) = ‖(x−y)ᵀA‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    matrix: DMatrix<f64>,
    kind: EncoderKind,
    /// False when the underlying fit hit its iteration or divergence guard
    /// (propensity fits on separable data). Carried as a warning, not an
    /// error: the map is still usable for matching.
    converged: bool,
}

impl Encoder {
    pub fn new(matrix: DMatrix<f64>, kind: EncoderKind, converged: bool) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder matrix"));
        }
        if kind == EncoderKind::Identity {
            let p = matrix.nrows();
            if matrix.ncols() != p || matrix != DMatrix::identity(p, p) {
                return Err(Error::DimensionMismatch { expected: p, actual: matrix.ncols() });
            }
        }
        Ok(Encoder { matrix, kind, converged })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Input dimension `p`.
    pub fn input_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Encoded dimension `k`.
    pub fn output_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// One treated→control assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub treated: usize,
    pub control: usize,
    pub distance: f64,
}

/// An injective treated→control matching with per-pair distances, tagged
/// with the encoder kind and the visit-order seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPairs {
    pairs: Vec<MatchedPair>,
    encoder_kind: EncoderKind,
    order_seed: u64,
}

impl MatchedPairs {
    /// Validates injectivity on both sides and finite non-negative
    /// distances. Every `MatchedPairs` in the crate passes through here.
    pub fn new(pairs: Vec<MatchedPair>, encoder_kind: EncoderKind, order_seed: u64) -> Result<Self> {
        assert_pairs_valid(&pairs)?;
        Ok(MatchedPairs { pairs, encoder_kind, order_seed })
    }

    pub fn pairs(&self) -> &[MatchedPair] {
        &self.pairs
    }

    pub fn encoder_kind(&self) -> EncoderKind {
        self.encoder_kind
    }

    pub fn order_seed(&self) -> u64 {
        self.order_seed
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MatchedPair> {
        self.pairs.iter()
    }

    /// Pooled unit indices: all matched treated units followed by their
    /// controls, in pair order.
    pub fn pooled_indices(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .map(|p| p.treated)
            .chain(self.pairs.iter().map(|p| p.control))
            .collect()
    }

    /// Replaces the pair list, revalidating. Used by caliper/prune.
    pub(crate) fn with_pairs(&self, pairs: Vec<MatchedPair>) -> Result<Self> {
        MatchedPairs::new(pairs, self.encoder_kind, self.order_seed)
    }
}

/// Shared assertion helper: distinct treated indices, distinct control
/// indices, finite non-negative distances.
pub fn assert_pairs_valid(pairs: &[MatchedPair]) -> Result<()> {
    let mut treated: Vec<usize> = pairs.iter().map(|p| p.treated).collect();
    let mut controls: Vec<usize> = pairs.iter().map(|p| p.control).collect();
    treated.sort_unstable();
    controls.sort_unstable();
    if treated.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::NonFinite("duplicate treated index in matching"));
    }
    if controls.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::NonFinite("duplicate control index in matching"));
    }
    for pair in pairs {
        if !pair.distance.is_finite() || pair.distance < 0.0 {
            return Err(Error::NonFinite("pair distance"));
        }
    }
    Ok(())
}
