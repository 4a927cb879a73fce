//! Dense linear-algebra and model-fitting primitives for small `p`.
//!
//! Everything here is a pure function; robustness is preferred over speed
//! (SVD-based solves, explicit eigenvalue cutoffs). Rank deficiency is
//! detected by the singular-value ratio `σ_min/σ_max < 1e-10`; pseudo-inverse
//! style routines truncate eigenvalues below `1e-10·λ_max`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative singular-value cutoff for rank detection.
const RANK_TOL: f64 = 1e-10;
/// Relative eigenvalue cutoff for pseudo-inversion.
const EIG_TOL: f64 = 1e-10;
/// IRLS iteration cap.
const IRLS_MAX_ITER: usize = 100;
/// IRLS convergence threshold on the max coefficient change.
const IRLS_TOL: f64 = 1e-8;
/// IRLS divergence guard on the coefficient norm.
const IRLS_NORM_CAP: f64 = 1e4;

/// Coefficients from a least-squares or likelihood fit. The intercept comes
/// first when the caller put an intercept column first in the design.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Ordinary least squares via SVD.
///
/// `design` is `N×(p+1)` with the intercept column included by the caller.
/// Errors with [`Error::RankDeficient`] when the singular-value ratio drops
/// below `1e-10`.
pub fn ols_fit(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<FitResult> {
    if design.nrows() != response.len() {
        return Err(Error::DimensionMismatch { expected: design.nrows(), actual: response.len() });
    }
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let ratio = if s_max > 0.0 { s_min / s_max } else { 0.0 };
    if design.nrows() < design.ncols() || ratio < RANK_TOL {
        return Err(Error::RankDeficient { ratio });
    }
    let coefficients = svd
        .solve(response, 0.0)
        .map_err(|_| Error::RankDeficient { ratio })?;
    Ok(FitResult { coefficients, converged: true, iterations: 1 })
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton steps). Converges when the max coefficient change falls
/// below `1e-8`; gives up after 100 iterations or when the coefficient norm
/// exceeds `1e4` (separation), reporting `converged = false` with the last
/// iterate rather than erroring.
pub fn logistic_fit(design: &DMatrix<f64>, labels: &[f64]) -> Result<FitResult> {
    logistic_fit_ridge(design, labels, 0.0)
}

/// Logistic regression with an L2 penalty `ridge/2·‖β‖²` on *all*
/// coefficients (including any intercept column). `ridge = 0` is the plain
/// MLE.
pub fn logistic_fit_ridge(design: &DMatrix<f64>, labels: &[f64], ridge: f64) -> Result<FitResult> {
    let n = design.nrows();
    let p = design.ncols();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: labels.len() });
    }
    for &y in labels {
        if y != 0.0 && y != 1.0 {
            return Err(Error::NonFinite("logistic labels"));
        }
    }
    if labels.iter().all(|&y| y == 0.0) {
        return Err(Error::OneClass(0));
    }
    if labels.iter().all(|&y| y == 1.0) {
        return Err(Error::OneClass(1));
    }

    let y = DVector::from_column_slice(labels);
    let mut beta = DVector::zeros(p);
    for iteration in 1..=IRLS_MAX_ITER {
        let eta = design * &beta;
        let mu = eta.map(sigmoid);
        // Unpenalized likelihood has no interior optimum once every unit is
        // fit with saturated probability (perfect separation): IRLS stalls
        // there rather than diverging, so detect it directly.
        if ridge == 0.0 {
            let worst = (0..n).map(|i| (y[i] - mu[i]).abs()).fold(0.0, f64::max);
            if worst < 1e-8 {
                return Ok(FitResult { coefficients: beta, converged: false, iterations: iteration });
            }
        }
        // Newton step: (XᵀWX + λI) δ = Xᵀ(y − μ) − λβ
        let mut hessian = DMatrix::zeros(p, p);
        for i in 0..n {
            let w = (mu[i] * (1.0 - mu[i])).max(1e-12);
            let row = design.row(i);
            for a in 0..p {
                for b in 0..p {
                    hessian[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            hessian[(a, a)] += ridge;
        }
        let grad = design.transpose() * (&y - &mu) - ridge * &beta;
        let step = hessian
            .clone()
            .svd(true, true)
            .solve(&grad, RANK_TOL)
            .map_err(|_| Error::RankDeficient { ratio: 0.0 })?;
        let delta = step.amax();
        beta += &step;
        if beta.norm() > IRLS_NORM_CAP {
            return Ok(FitResult { coefficients: beta, converged: false, iterations: iteration });
        }
        if delta < IRLS_TOL {
            return Ok(FitResult { coefficients: beta, converged: true, iterations: iteration });
        }
    }
    Ok(FitResult { coefficients: beta, converged: false, iterations: IRLS_MAX_ITER })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sample covariance with divisor `N−1`. Requires `N ≥ 2`.
pub fn sample_covariance(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = covariates.nrows();
    assert!(n >= 2, "sample covariance needs at least 2 rows");
    let p = covariates.ncols();
    let mean = covariates.row_mean();
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..n {
        let dev = covariates.row(i) - &mean;
        for a in 0..p {
            for b in a..p {
                cov[(a, b)] += dev[a] * dev[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            cov[(a, b)] /= denom;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

fn check_symmetric(sigma: &DMatrix<f64>) -> Result<()> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: sigma.ncols() });
    }
    let mut asym: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for a in 0..p {
        for b in (a + 1)..p {
            asym = asym.max((sigma[(a, b)] - sigma[(b, a)]).abs());
            scale = scale.max(sigma[(a, b)].abs()).max(sigma[(b, a)].abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Truncated eigendecomposition of a symmetric matrix: eigenvalues below
/// `1e-10·λ_max` (including negatives) are dropped.
fn truncated_eigen(sigma: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let symmetrized = (sigma + sigma.transpose()) * 0.5;
    let eigen = symmetrized.symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = EIG_TOL * lambda_max.max(f64::MIN_POSITIVE);
    let kept: Vec<f64> =
        eigen.eigenvalues.iter().map(|&l| if l > cutoff { l } else { 0.0 }).collect();
    (eigen.eigenvectors, kept)
}

/// A factor `R` with `R·Rᵀ` equal to the Moore–Penrose pseudo-inverse of
/// `sigma`. For full-rank `sigma` this is an inverse square root; for
/// rank-deficient input the null space maps to zero, yielding a pseudo-metric
/// factor.
pub fn inverse_cholesky_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(sigma)?;
    let (vectors, values) = truncated_eigen(sigma);
    let p = sigma.nrows();
    let mut factor = vectors;
    for c in 0..p {
        let scale = if values[c] > 0.0 { values[c].sqrt().recip() } else { 0.0 };
        factor.column_mut(c).scale_mut(scale);
    }
    Ok(factor)
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix, with the same
/// `1e-10·λ_max` eigenvalue cutoff as [`inverse_cholesky_factor`].
pub fn pseudo_inverse(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(sigma)?;
    let (vectors, values) = truncated_eigen(sigma);
    let p = sigma.nrows();
    let mut scaled = vectors.clone();
    for c in 0..p {
        let scale = if values[c] > 0.0 { values[c].recip() } else { 0.0 };
        scaled.column_mut(c).scale_mut(scale);
    }
    Ok(scaled * vectors.transpose())
}

/// Equal-tail empirical interval via linear interpolation of order
/// statistics (quantile type 7): the `((1−level)/2, 1−(1−level)/2)`
/// quantiles. Needs at least two finite values.
pub fn percentile_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    assert!(level > 0.0 && level < 1.0, "level must be in (0,1)");
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.len() < 2 {
        return Err(Error::TooFew(sorted.len()));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok((interpolated_quantile(&sorted, tail), interpolated_quantile(&sorted, 1.0 - tail)))
}

fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
