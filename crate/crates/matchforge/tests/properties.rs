//! Randomized property suites: pseudo-metric laws, affine invariance,
//! least-squares identities, pseudo-inverse reconstruction, matcher
//! invariants.

use matchforge::encoders::{
    encode, identity_encoder, mahalanobis_encoder, odm_encoder, pair_distance,
    propensity_encoder,
};
use matchforge::kernels::{
    inverse_cholesky_factor, ols_fit, percentile_interval, pseudo_inverse, sample_covariance,
};
use matchforge::matching::{
    apply_caliper, brute_force_match, greedy_match, prune_worst, visit_order,
};
use matchforge::{Encoder, EncoderKind, Sample};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn finite_in(range: std::ops::Range<f64>) -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL.prop_map(move |v| {
        let width = range.end - range.start;
        range.start + (v.abs() % 1.0) * width
    })
}

fn random_sample(n: usize, p: usize) -> impl Strategy<Value = Sample> {
    (
        prop::collection::vec(finite_in(-3.0..3.0), n * p),
        prop::collection::vec(prop::bool::ANY, n),
        prop::collection::vec(finite_in(-2.0..2.0), n),
    )
        .prop_map(move |(values, mut flags, outcome)| {
            // force both groups present
            flags[0] = true;
            flags[1] = false;
            let cov = DMatrix::from_vec(n, p, values);
            let treatment: Vec<f64> = flags.iter().map(|&f| f64::from(f)).collect();
            Sample::new(cov, treatment, outcome, None).expect("generated sample is valid")
        })
}

fn all_encoders(sample: &Sample) -> Vec<Encoder> {
    let mut out = vec![identity_encoder(sample.n_covariates()), mahalanobis_encoder(sample)];
    if let Ok(enc) = propensity_encoder(sample) {
        out.push(enc);
    }
    if let Ok(enc) = odm_encoder(sample) {
        out.push(enc);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_metric_laws(sample in random_sample(24, 3), idx in prop::array::uniform3(0usize..24)) {
        let [a, b, c] = idx;
        let x = sample.unit_covariates(a);
        let y = sample.unit_covariates(b);
        let z = sample.unit_covariates(c);
        for enc in all_encoders(&sample) {
            let dxx = pair_distance(&enc, &x, &x).unwrap();
            prop_assert!(dxx == 0.0);
            let dxy = pair_distance(&enc, &x, &y).unwrap();
            let dyx = pair_distance(&enc, &y, &x).unwrap();
            prop_assert!((dxy - dyx).abs() <= 1e-12);
            let dxz = pair_distance(&enc, &x, &z).unwrap();
            let dyz = pair_distance(&enc, &y, &z).unwrap();
            prop_assert!(dxz <= dxy + dyz + 1e-12);
            prop_assert!(dxy >= 0.0);
        }
    }

    #[test]
    fn mahalanobis_affine_invariance(
        sample in random_sample(30, 2),
        m in prop::array::uniform4(finite_in(-2.0..2.0)),
    ) {
        // require a safely invertible transform
        let det = m[0] * m[3] - m[1] * m[2];
        prop_assume!(det.abs() > 0.3);
        let map = DMatrix::from_row_slice(2, 2, &m);
        let transformed_cov = sample.covariates() * map.transpose();
        let transformed = Sample::new(
            transformed_cov,
            sample.treatment().iter().map(|&t| f64::from(t)).collect(),
            sample.outcome().iter().copied().collect(),
            None,
        ).unwrap();

        let enc_a = mahalanobis_encoder(&sample);
        let enc_b = mahalanobis_encoder(&transformed);
        for i in 0..5 {
            for j in (i + 1)..5 {
                let da = pair_distance(&enc_a, &sample.unit_covariates(i), &sample.unit_covariates(j)).unwrap();
                let db = pair_distance(&enc_b, &transformed.unit_covariates(i), &transformed.unit_covariates(j)).unwrap();
                prop_assert!((da - db).abs() <= 1e-6 * da.abs().max(1.0), "d {da} vs {db}");
            }
        }
    }

    #[test]
    fn ols_orthogonality_and_scaling(
        values in prop::collection::vec(finite_in(-2.0..2.0), 40 * 3),
        response in prop::collection::vec(finite_in(-3.0..3.0), 40),
        scale in finite_in(0.5..4.0),
    ) {
        let design = {
            let mut d = DMatrix::from_vec(40, 3, values);
            for r in 0..40 {
                d[(r, 0)] = 1.0;
            }
            d
        };
        let y = DVector::from_vec(response);
        let fit = match ols_fit(&design, &y) {
            Ok(f) => f,
            Err(_) => return Ok(()), // rank-deficient draw
        };
        let resid = &y - &design * &fit.coefficients;
        let gram = design.transpose() * &resid;
        let tol = 1e-8 * 40.0 * y.amax().max(1.0);
        prop_assert!(gram.amax() <= tol, "orthogonality {}", gram.amax());

        // scaling column 2 by c scales its coefficient by 1/c
        let mut scaled = design.clone();
        for r in 0..40 {
            scaled[(r, 2)] *= scale;
        }
        let refit = ols_fit(&scaled, &y).unwrap();
        let expected = fit.coefficients[2] / scale;
        prop_assert!(
            (refit.coefficients[2] - expected).abs() <= 1e-8 * expected.abs().max(1.0)
        );
    }

    #[test]
    fn pseudo_inverse_penrose_conditions(
        values in prop::collection::vec(finite_in(-1.5..1.5), 4 * 3),
    ) {
        // random PSD (possibly singular) Σ = BᵀB from a 4×3 factor
        let b = DMatrix::from_vec(4, 3, values);
        let sigma = b.transpose() * &b;
        let pinv = pseudo_inverse(&sigma).unwrap();
        let tol = 1e-8 * sigma.norm().max(1.0).max(pinv.norm());
        let spsp = &sigma * &pinv * &sigma;
        prop_assert!((&spsp - &sigma).norm() <= tol, "AXA=A off by {}", (&spsp - &sigma).norm());
        let psps = &pinv * &sigma * &pinv;
        prop_assert!((&psps - &pinv).norm() <= tol);
        let sp = &sigma * &pinv;
        prop_assert!((&sp - sp.transpose()).norm() <= tol);
        let ps = &pinv * &sigma;
        prop_assert!((&ps - ps.transpose()).norm() <= tol);

        // factor reconstruction
        let r = inverse_cholesky_factor(&sigma).unwrap();
        let rrt = &r * r.transpose();
        prop_assert!((&rrt - &pinv).norm() <= 1e-8 * pinv.norm().max(1e-12));
    }

    #[test]
    fn caliper_monotone_and_pruning_nested(
        sample in random_sample(26, 2),
        d1 in finite_in(0.0..2.0),
        d2 in finite_in(0.0..2.0),
        seed in any::<u64>(),
    ) {
        let enc = mahalanobis_encoder(&sample);
        let pairs = greedy_match(&sample, &enc, seed).unwrap();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let small = apply_caliper(&pairs, lo);
        let big = apply_caliper(&pairs, hi);
        for p in small.iter() {
            prop_assert!(big.iter().any(|q| q.treated == p.treated && q.control == p.control));
        }
        // pruning keeps a subset with all kept distances ≤ removed ones
        if !pairs.is_empty() {
            let k = pairs.len() / 2;
            let kept = prune_worst(&pairs, k).unwrap();
            prop_assert_eq!(kept.len(), pairs.len() - k);
            let max_kept = kept.iter().map(|p| p.distance).fold(0.0, f64::max);
            let mut all: Vec<f64> = pairs.iter().map(|p| p.distance).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let threshold = all[pairs.len() - k - 1];
            prop_assert!(max_kept <= threshold + 1e-12);
        }
    }

    #[test]
    fn greedy_equals_brute_force(
        sample in random_sample(18, 2),
        seed in any::<u64>(),
    ) {
        let enc = mahalanobis_encoder(&sample);
        let fast = greedy_match(&sample, &enc, seed).unwrap();
        let order = visit_order(sample.treated_indices().len(), seed);
        let slow = brute_force_match(&sample, &enc, &order).unwrap();
        prop_assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(slow.iter()) {
            prop_assert_eq!((a.treated, a.control), (b.treated, b.control));
            prop_assert!((a.distance - b.distance).abs() <= 1e-9);
        }
        // injectivity
        let mut controls: Vec<usize> = fast.iter().map(|p| p.control).collect();
        controls.sort_unstable();
        controls.dedup();
        prop_assert_eq!(controls.len(), fast.len());
    }

    #[test]
    fn percentile_inside_range(
        mut values in prop::collection::vec(finite_in(-5.0..5.0), 2..60),
        level in finite_in(0.05..0.95),
    ) {
        let (lo, hi) = percentile_interval(&values, level).unwrap();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert!(lo >= values[0] - 1e-12);
        prop_assert!(hi <= values[values.len() - 1] + 1e-12);
        prop_assert!(lo <= hi);
    }

    #[test]
    fn encoded_coordinates_match_pair_distance(
        sample in random_sample(12, 3),
        i in 0usize..12,
        j in 0usize..12,
    ) {
        for enc in all_encoders(&sample) {
            let img = encode(&enc, sample.covariates()).unwrap();
            let mut sq = 0.0;
            for c in 0..img.ncols() {
                let d = img[(i, c)] - img[(j, c)];
                sq += d * d;
            }
            let direct = pair_distance(&enc, &sample.unit_covariates(i), &sample.unit_covariates(j)).unwrap();
            prop_assert!((sq.sqrt() - direct).abs() <= 1e-9);
        }
    }
}

#[test]
fn exact_match_completeness() {
    // every treated unit has its own zero-distance control: all distances 0
    use rand::Rng;
    let mut rng = matchforge::seeds::rng(99, &[1]);
    for trial in 0..25 {
        let n_t = 2 + (trial % 6);
        let rows: Vec<[f64; 2]> =
            (0..n_t).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let n = 2 * n_t;
        let cov = DMatrix::from_fn(n, 2, |r, c| rows[r % n_t][c]);
        let treatment: Vec<f64> = (0..n).map(|i| f64::from(i < n_t)).collect();
        let sample = Sample::new(cov, treatment, vec![0.0; n], None).unwrap();
        let pairs =
            greedy_match(&sample, &identity_encoder(2), trial as u64).unwrap();
        assert_eq!(pairs.len(), n_t);
        assert!(pairs.iter().all(|p| p.distance == 0.0));
    }
}

#[test]
fn matching_deterministic_under_thread_counts() {
    // greedy_match is sequential by definition; check end-to-end stability
    // of a sweep is covered in runner tests. Here: same seed, same result,
    // different seeds usually differ in visit order.
    let mut any_diff = false;
    use rand::Rng;
    let mut rng = matchforge::seeds::rng(7, &[2]);
    let n = 30;
    let cov = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
    let treatment: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
    let sample = Sample::new(cov, treatment, vec![0.0; n], None).unwrap();
    let enc = identity_encoder(2);
    let base = greedy_match(&sample, &enc, 1).unwrap();
    for seed in 2..8 {
        let other = greedy_match(&sample, &enc, seed).unwrap();
        assert_eq!(greedy_match(&sample, &enc, seed).unwrap(), other);
        if other != base {
            any_diff = true;
        }
    }
    assert!(any_diff, "different seeds should visit in different orders");
}

#[test]
fn nested_noiseless_specs_return_effect() {
    // S' ⊇ S on noiseless data generated by S with effect 2T returns 2
    use matchforge::estimators::{regression_estimate, Specification};
    use matchforge::model::{MatchedPair, MatchedPairs};
    use rand::Rng;
    let mut rng = matchforge::seeds::rng(13, &[3]);
    for &base_mask in &[0b1u16, 0b11, 0b101, 0b1100] {
        let n_each = 30;
        let rows: Vec<[f64; 2]> =
            (0..n_each).map(|_| [rng.random_range(0.5..4.5), rng.random_range(0.5..4.5)]).collect();
        let n = 2 * n_each;
        let cov = DMatrix::from_fn(n, 2, |r, c| rows[r % n_each][c]);
        let treatment: Vec<f64> = (0..n).map(|i| f64::from(i < n_each)).collect();
        let spec = Specification::from_mask(base_mask);
        let outcome: Vec<f64> = (0..n)
            .map(|i| {
                let x = rows[i % n_each];
                let features: f64 = spec
                    .monomials()
                    .map(|(a, b)| x[0].powi(a as i32) * x[1].powi(b as i32))
                    .sum();
                features + 2.0 * f64::from(i < n_each)
            })
            .collect();
        let sample = Sample::new(cov, treatment, outcome, None).unwrap();
        let pairs: Vec<MatchedPair> = (0..n_each)
            .map(|i| MatchedPair { treated: i, control: n_each + i, distance: 0.0 })
            .collect();
        let pairs = MatchedPairs::new(pairs, EncoderKind::Identity, 0).unwrap();
        for &super_mask in &[base_mask, base_mask | 0b11, 0b1_1111_1111u16] {
            if super_mask & base_mask != base_mask {
                continue;
            }
            let est =
                regression_estimate(&sample, &pairs, &Specification::from_mask(super_mask))
                    .unwrap();
            assert!((est - 2.0).abs() < 1e-6, "mask {super_mask:b}: {est}");
        }
    }
}
