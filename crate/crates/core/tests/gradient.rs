mod common;

use common::{fd_max_rel_error, refs, tiny_model, FD_TOLERANCE};
use supmade::objective::{gradient, loglik_gradient, objective_value, LabeledBatch, ObjectiveConfig};

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut worst: f64 = 0.0;
    for binary in [false, true] {
        for lambda in [0.0, 1.0, 1e3] {
            for seed in 0..20 {
                let e = fd_max_rel_error(binary, lambda, seed);
                assert!(
                    e <= FD_TOLERANCE,
                    "binary={binary} lambda={lambda} seed={seed}: relative error {e:e}"
                );
                worst = worst.max(e);
            }
        }
    }
    println!("worst relative error {worst:e}");
}

#[test]
fn zero_lambda_objective_and_gradient_are_the_likelihood_bitwise() {
    use rand::SeedableRng;
    for binary in [false, true] {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normals = common::random_rows(7, 3, binary, &mut rng);
        let anomalies = common::random_rows(2, 3, binary, &mut rng);
        let p = tiny_model(binary, 4, &[]);
        let batch = LabeledBatch::new(refs(&normals), refs(&anomalies)).unwrap();
        let zero = ObjectiveConfig::new(0.0).unwrap();
        let value = objective_value(&p, &batch, &zero).unwrap();
        let mle = supmade::objective::normal_loglik(&p, &refs(&normals)).unwrap();
        assert_eq!(value.to_bits(), mle.to_bits());
        let g = gradient(&p, &batch, &zero).unwrap();
        let reference = loglik_gradient(&p, &refs(&normals)).unwrap();
        assert_eq!(g, reference);
        assert_eq!(g.value.to_bits(), mle.to_bits());
    }
}

#[test]
fn gradient_difference_is_linear_in_lambda() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let normals = common::random_rows(5, 3, false, &mut rng);
    let anomalies = common::random_rows(3, 3, false, &mut rng);
    let p = tiny_model(false, 9, &[]);
    let batch = LabeledBatch::new(refs(&normals), refs(&anomalies)).unwrap();
    let base = loglik_gradient(&p, &refs(&normals)).unwrap().grad;
    let one = gradient(&p, &batch, &ObjectiveConfig::new(1.5).unwrap()).unwrap().grad;
    let two = gradient(&p, &batch, &ObjectiveConfig::new(3.0).unwrap()).unwrap().grad;
    for i in 0..base.len() {
        let d1 = one[i] - base[i];
        let d2 = two[i] - base[i];
        assert!((d2 - 2.0 * d1).abs() <= 1e-12, "coordinate {i}: {d1} vs {d2}");
    }
}
