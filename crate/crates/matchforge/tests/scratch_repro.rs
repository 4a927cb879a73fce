use matchforge::encoders::*;
use matchforge::matching::*;
use matchforge::*;
use nalgebra::DMatrix;

#[test]
fn repro() {
    let n = 18;
    let cov = DMatrix::from_fn(n, 2, |_, c| if c == 0 { -3.0 } else { -2.0 });
    let mut treatment: Vec<f64> = vec![0.0; n];
    treatment[0] = 1.0;
    treatment[2] = 1.0;
    treatment[5] = 1.0;
    let sample = Sample::new(cov, treatment, vec![0.0; n], None).unwrap();
    let enc = mahalanobis_encoder(&sample);
    println!("encoder matrix: {}", enc.matrix());
    let fast = greedy_match(&sample, &enc, 0).unwrap();
    let order = visit_order(sample.treated_indices().len(), 0);
    let slow = brute_force_match(&sample, &enc, &order).unwrap();
    for (a, b) in fast.iter().zip(slow.iter()) {
        println!(
            "fast ({},{},{:e})  slow ({},{},{:e})",
            a.treated, a.control, a.distance, b.treated, b.control, b.distance
        );
    }
    panic!("show output");
}
