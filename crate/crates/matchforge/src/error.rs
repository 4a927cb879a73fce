use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by validation, fitting, matching and the experiment
/// runners.
#[derive(Debug, Error)]
pub enum Error {
    /// A sample is missing treated or control units.
    #[error("sample has no {0} units")]
    EmptyGroup(&'static str),

    /// A NaN or infinity was found where finite data is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A treatment indicator outside {{0, 1}}.
    #[error("treatment value {value} at unit {index} is not 0 or 1")]
    BadTreatment { index: usize, value: f64 },

    /// Design matrix numerically rank deficient.
    #[error("design matrix is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    /// Logistic fit with a single label class.
    #[error("labels are all {0}; logistic fit needs both classes")]
    OneClass(u8),

    /// A symmetric matrix was expected.
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    /// Too few values for an empirical interval.
    #[error("need at least 2 finite values, got {0}")]
    TooFew(usize),

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Matching requested on a sample without controls.
    #[error("no control units available for matching")]
    NoControls,

    /// Pruning more pairs than exist.
    #[error("cannot prune {k} of {available} pairs")]
    KTooLarge { k: usize, available: usize },

    /// An estimator was handed an empty matched set.
    #[error("no matched pairs to estimate from")]
    EmptyPairs,

    /// Exact matching failed for a treated unit.
    #[error("treated unit {0} has no control with identical covariates")]
    UnmatchedTreated(usize),

    /// Every bootstrap or experiment replication errored.
    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    /// A covariance matrix with a significantly negative eigenvalue.
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    CovarianceNotPsd(f64),

    /// Negative weight supplied for a diagonal metric.
    #[error("negative weight {0} supplied for a diagonal metric")]
    NegativeWeight(f64),

    /// The plug-in estimator needs a 0/1 outcome.
    #[error("outcome must be binary for the plug-in estimator")]
    NonBinaryOutcome,

    /// Builtin scenario lookup outside 1..=9.
    #[error("scenario {0} is not a builtin (valid: 1..=9)")]
    UnknownScenario(usize),

    /// A sweep run failed; carries the run index for context.
    #[error("run {run} of scenario sweep failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}
