//! Balancing-score encoders and the pseudo-metric they induce.
//!
//! Each encoder is a linear map `A` (p×k); the matching distance between two
//! units is `‖(x−y)ᵀA‖₂`. The identity map is the finest balancing score;
//! the propensity slope vector is the coarsest; the Mahalanobis factor
//! whitens by the sample covariance; the outcome-weighted map scales each
//! covariate by `|β'_j|^{1/2}` from an outcome regression, which suppresses
//! covariates that carry no outcome signal.

use nalgebra::{DMatrix, DVector};

use crate::kernels::{inverse_cholesky_factor, logistic_fit, ols_fit, sample_covariance};
use crate::model::{Encoder, EncoderKind, Sample};
use crate::{Error, Result};

/// The identity map on `p` covariates.
pub fn identity_encoder(p: usize) -> Encoder {
    assert!(p >= 1, "identity encoder needs p >= 1");
    Encoder::new(DMatrix::identity(p, p), EncoderKind::Identity, true)
        .expect("identity matrix is a valid encoder")
}

/// The p×1 column of logistic propensity slopes (intercept excluded — it
/// cancels in pair differences). Distance is the absolute gap in linear
/// propensity. A non-convergent fit (separation) is carried on the encoder
/// as a warning flag, not an error.
pub fn propensity_encoder(sample: &Sample) -> Result<Encoder> {
    let design = design_with_intercept(sample.covariates());
    let labels: Vec<f64> = sample.treatment().iter().map(|&t| f64::from(t)).collect();
    let fit = logistic_fit(&design, &labels)?;
    let p = sample.n_covariates();
    let slopes = DMatrix::from_fn(p, 1, |r, _| fit.coefficients[r + 1]);
    Encoder::new(slopes, EncoderKind::Propensity, fit.converged)
}

/// A factor `R` with `RRᵀ` equal to the pseudo-inverse of the sample
/// covariance of all units, so the induced distance is the
/// (pseudo-)Mahalanobis distance. Rank deficiency degrades gracefully to a
/// pseudo-metric.
pub fn mahalanobis_encoder(sample: &Sample) -> Encoder {
    let sigma = sample_covariance(sample.covariates());
    let factor = inverse_cholesky_factor(&sigma).expect("sample covariance is symmetric");
    Encoder::new(factor, EncoderKind::Mahalanobis, true)
        .expect("whitening factor has finite entries")
}

/// The outcome-weighted diagonal map: fit the outcome on an intercept plus
/// all covariates by least squares (the treatment indicator is deliberately
/// not a regressor) and weight covariate `j` by `|β'_j|^{1/2}`. The
/// intercept weight is dropped — an intercept difference between units is
/// always zero, so it never moves the distance.
pub fn odm_encoder(sample: &Sample) -> Result<Encoder> {
    let design = design_with_intercept(sample.covariates());
    let fit = ols_fit(&design, sample.outcome())?;
    let p = sample.n_covariates();
    let mut weights = DMatrix::zeros(p, p);
    for j in 0..p {
        weights[(j, j)] = fit.coefficients[j + 1].abs().sqrt();
    }
    Encoder::new(weights, EncoderKind::Odm, true)
}

/// `‖(x−y)ᵀA‖₂`: non-negative, symmetric, satisfies the triangle inequality.
pub fn pair_distance(encoder: &Encoder, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    let p = encoder.input_dim();
    if x.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: x.len() });
    }
    if y.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: y.len() });
    }
    let diff = x - y;
    Ok((encoder.matrix().transpose() * diff).norm())
}

/// Encodes all rows at once: `X·A`, an `N×k` matrix of image coordinates.
/// Matching uses this so each unit is mapped exactly once.
pub fn encode(encoder: &Encoder, covariates: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if covariates.ncols() != encoder.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.input_dim(),
            actual: covariates.ncols(),
        });
    }
    Ok(covariates * encoder.matrix())
}

fn design_with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = covariates.nrows();
    let p = covariates.ncols();
    DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { covariates[(r, c - 1)] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn vector(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn identity_distances_are_euclidean() {
        let enc = identity_encoder(3);
        assert_eq!(enc.matrix(), &DMatrix::identity(3, 3));
        let d = pair_distance(&enc, &vector(&[0.0, 0.0, 0.0]), &vector(&[1.0, 2.0, 2.0])).unwrap();
        assert_abs_diff_eq!(d, 3.0, epsilon = 1e-12);
        let same = pair_distance(&identity_encoder(2), &vector(&[1.0, 2.0]), &vector(&[1.0, 2.0]))
            .unwrap();
        assert_eq!(same, 0.0);
        let p1 = identity_encoder(1);
        assert_eq!(p1.matrix(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn three_four_five() {
        let d = pair_distance(&identity_encoder(2), &vector(&[3.0, 4.0]), &vector(&[0.0, 0.0]))
            .unwrap();
        assert_abs_diff_eq!(d, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err =
            pair_distance(&identity_encoder(2), &vector(&[1.0]), &vector(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    fn synthetic_sample(
        n: usize,
        seed: u64,
        treat: impl Fn(&[f64], &mut rand_chacha::ChaCha8Rng) -> f64,
        outcome: impl Fn(&[f64], &mut rand_chacha::ChaCha8Rng) -> f64,
    ) -> Sample {
        let mut rng = crate::seeds::rng(seed, &[100]);
        let p = 2;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        }
        let cov = DMatrix::from_fn(n, p, |r, c| rows[r][c]);
        let treatment: Vec<f64> = rows.iter().map(|x| treat(x, &mut rng)).collect();
        let outcomes: Vec<f64> = rows.iter().map(|x| outcome(x, &mut rng)).collect();
        Sample::new(cov, treatment, outcomes, None).unwrap()
    }

    #[test]
    fn propensity_sign_and_rank_one() {
        let s = synthetic_sample(
            1500,
            7,
            |x, rng| f64::from(rng.random_bool(if x[0] > 0.0 { 0.9 } else { 0.1 })),
            |_, rng| rng.random_range(0.0..1.0),
        );
        let enc = propensity_encoder(&s).unwrap();
        assert!(enc.matrix()[(0, 0)] > 0.0, "weight on the separating coordinate");
        // two units differing only where the weight is ~0 stay close
        let w1 = enc.matrix()[(1, 0)];
        let d = pair_distance(&enc, &vector(&[0.3, 5.0]), &vector(&[0.3, -5.0])).unwrap();
        assert_abs_diff_eq!(d, w1.abs() * 10.0, epsilon = 1e-9);
    }

    #[test]
    fn propensity_on_independent_treatment_is_small() {
        let s = synthetic_sample(
            2000,
            8,
            |_, rng| f64::from(rng.random_bool(0.5)),
            |_, rng| rng.random_range(0.0..1.0),
        );
        let enc = propensity_encoder(&s).unwrap();
        assert!(enc.matrix().norm() < 0.2, "norm {}", enc.matrix().norm());
    }

    #[test]
    fn propensity_zero_weight_coordinate_contributes_nothing() {
        let mut m = DMatrix::zeros(2, 1);
        m[(0, 0)] = 1.5;
        let enc = Encoder::new(m, EncoderKind::Propensity, true).unwrap();
        let d = pair_distance(&enc, &vector(&[2.0, 7.0]), &vector(&[2.0, -3.0])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn mahalanobis_diagonal_example() {
        // four points whose sample covariance is exactly diag(4, 1):
        // distance((0,0),(2,0)) = 1 = distance((0,0),(0,1))
        let a = 6.0_f64.sqrt();
        let b = 1.5_f64.sqrt();
        let cov = DMatrix::from_row_slice(4, 2, &[-a, 0.0, a, 0.0, 0.0, -b, 0.0, b]);
        let s = Sample::new(cov, vec![1.0, 0.0, 1.0, 0.0], vec![0.0; 4], None).unwrap();
        let sigma = sample_covariance(s.covariates());
        assert_abs_diff_eq!(sigma[(0, 0)], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma[(1, 1)], 1.0, epsilon = 1e-12);
        let enc = mahalanobis_encoder(&s);
        let dx = pair_distance(&enc, &vector(&[0.0, 0.0]), &vector(&[2.0, 0.0])).unwrap();
        let dy = pair_distance(&enc, &vector(&[0.0, 0.0]), &vector(&[0.0, 1.0])).unwrap();
        assert_abs_diff_eq!(dx, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(dy, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mahalanobis_identity_covariance_is_euclidean() {
        // unit-variance uncorrelated points: distances match the identity map
        let c = 1.5_f64.sqrt();
        let cov = DMatrix::from_row_slice(4, 2, &[-c, 0.0, c, 0.0, 0.0, -c, 0.0, c]);
        let s = Sample::new(cov, vec![1.0, 0.0, 1.0, 0.0], vec![0.0; 4], None).unwrap();
        let enc = mahalanobis_encoder(&s);
        let x = vector(&[0.7, -0.4]);
        let y = vector(&[-0.1, 0.9]);
        let euclid = pair_distance(&identity_encoder(2), &x, &y).unwrap();
        let maha = pair_distance(&enc, &x, &y).unwrap();
        assert_abs_diff_eq!(maha, euclid, epsilon = 1e-9);
    }

    #[test]
    fn mahalanobis_constant_column_is_ignored() {
        let mut rng = crate::seeds::rng(10, &[1]);
        let n = 50;
        let cov = DMatrix::from_fn(n, 2, |_, c| {
            if c == 0 {
                rng.random_range(0.0..1.0)
            } else {
                3.0
            }
        });
        let treatment: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        let s = Sample::new(cov, treatment, vec![0.0; n], None).unwrap();
        let enc = mahalanobis_encoder(&s);
        let d = pair_distance(&enc, &vector(&[0.5, 0.0]), &vector(&[0.5, 10.0])).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn odm_weights_follow_outcome_influence() {
        // outcome = 4·X1 + noise, X2 pure noise: weights -> (2, 0)
        let s = synthetic_sample(
            2000,
            11,
            |_, rng| f64::from(rng.random_bool(0.5)),
            |x, rng| 4.0 * x[0] + rng.random_range(-0.5..0.5),
        );
        let enc = odm_encoder(&s).unwrap();
        assert!((enc.matrix()[(0, 0)] - 2.0).abs() < 0.1, "w1 {}", enc.matrix()[(0, 0)]);
        assert!(enc.matrix()[(1, 1)].abs() < 0.15, "w2 {}", enc.matrix()[(1, 1)]);
    }

    #[test]
    fn odm_zero_outcome_gives_zero_map() {
        let s = synthetic_sample(50, 12, |_, rng| f64::from(rng.random_bool(0.5)), |_, _| 0.0);
        let enc = odm_encoder(&s).unwrap();
        assert!(enc.matrix().amax() < 1e-7);
        let d = pair_distance(&enc, &vector(&[1.0, 2.0]), &vector(&[-3.0, 4.0])).unwrap();
        assert!(d < 1e-6);
    }

    #[test]
    fn odm_weighted_distance_example() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 2.0;
        let enc = Encoder::new(m, EncoderKind::Odm, true).unwrap();
        let d = pair_distance(&enc, &vector(&[1.0, 7.0]), &vector(&[0.0, -7.0])).unwrap();
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn odm_noise_suppression_at_zero_offset() {
        // outcome depends only on K = {0,1}; perfectly matched pairs on K
        // should have vanishing ODM distance as N grows.
        let n = 5000;
        let p = 5;
        let mut rng = crate::seeds::rng(13, &[2]);
        let cov = DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..1.0));
        let treatment: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        let outcome: Vec<f64> = (0..n)
            .map(|i| 2.0 * cov[(i, 0)] - cov[(i, 1)] + rng.random_range(-1.0..1.0))
            .collect();
        let s = Sample::new(cov, treatment, outcome, None).unwrap();
        let enc = odm_encoder(&s).unwrap();
        let mut total = 0.0;
        let reps = 2000;
        for _ in 0..reps {
            let mut x = DVector::zeros(p);
            let mut y = DVector::zeros(p);
            for j in 0..p {
                let shared: f64 = rng.random_range(0.0..1.0);
                if j < 2 {
                    x[j] = shared;
                    y[j] = shared;
                } else {
                    x[j] = rng.random_range(0.0..1.0);
                    y[j] = rng.random_range(0.0..1.0);
                }
            }
            let d = pair_distance(&enc, &x, &y).unwrap();
            total += d * d;
        }
        let mean_sq = total / reps as f64;
        assert!(mean_sq < 0.05, "mean squared distance {mean_sq}");
    }
}
