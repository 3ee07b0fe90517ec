use approx::assert_abs_diff_eq;
use itr_core::glm::{
    fit_linear, fit_logistic, fit_logistic_with, logistic, LogisticOptions,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn linear_exact_fit_on_proportional_data() {
    let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
    let m = fit_linear(&x, &[2.0, 4.0, 6.0], None).unwrap();
    assert_abs_diff_eq!(m.coefficients[0], 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m.coefficients[1], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m.residual_variance, 0.0, epsilon = 1e-20);
}

#[test]
fn linear_constant_outcome_is_pure_intercept() {
    let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 7.0]);
    let m = fit_linear(&x, &[5.5, 5.5, 5.5, 5.5], None).unwrap();
    assert_abs_diff_eq!(m.coefficients[0], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(m.coefficients[1], 5.5, epsilon = 1e-12);
}

#[test]
fn linear_recovers_noiseless_coefficients() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let n = 100;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * x[(i, 0)] - 2.0 * x[(i, 1)] + 0.5)
        .collect();
    let m = fit_linear(&x, &y, None).unwrap();
    assert_abs_diff_eq!(m.coefficients[0], 1.5, epsilon = 1e-8);
    assert_abs_diff_eq!(m.coefficients[1], -2.0, epsilon = 1e-8);
    assert_abs_diff_eq!(m.coefficients[2], 0.5, epsilon = 1e-8);
}

#[test]
fn linear_uniform_weights_match_unweighted_exactly() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let n = 40;
    let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
    let noise = Normal::new(0.0, 0.3).unwrap();
    let y: Vec<f64> = (0..n)
        .map(|i| x[(i, 0)] - x[(i, 2)] + noise.sample(&mut rng))
        .collect();
    let plain = fit_linear(&x, &y, None).unwrap();
    let weighted = fit_linear(&x, &y, Some(&vec![1.0; n])).unwrap();
    assert_eq!(plain.coefficients, weighted.coefficients);
}

#[test]
fn linear_weights_shift_the_fit_toward_heavy_rows() {
    // Two clusters with different intercepts; upweighting one pulls the
    // fitted intercept toward it.
    let x = DMatrix::from_column_slice(6, 1, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let y = [0.0, 0.1, -0.1, 10.0, 10.1, 9.9];
    let w = [100.0, 100.0, 100.0, 0.01, 0.01, 0.01];
    let m = fit_linear(&x, &y, Some(&w)).unwrap();
    assert!(m.coefficients[1].abs() < 0.1, "intercept {}", m.coefficients[1]);
}

#[test]
fn linear_duplicated_column_errors_with_column_indices() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let base: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cols = base.clone();
    cols.extend(base.iter().map(|v| 2.0 * v)); // exact linear dependence
    let x = DMatrix::from_column_slice(30, 2, &cols);
    let y: Vec<f64> = base.iter().map(|v| v + 1.0).collect();
    let err = fit_linear(&x, &y, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("rank deficient"), "{msg}");
    assert!(msg.contains('0') && msg.contains('1'), "{msg}");
}

#[test]
fn linear_rejects_too_few_rows_and_bad_weights() {
    let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
    assert!(fit_linear(&x, &[1.0, 2.0], None).is_err());
    let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let y = [1.0; 5];
    assert!(fit_linear(&x, &y, Some(&[0.0; 5])).is_err());
    assert!(fit_linear(&x, &y, Some(&[1.0, -1.0, 1.0, 1.0, 1.0])).is_err());
}

#[test]
fn logistic_symmetric_data_has_zero_intercept() {
    let mut xs = Vec::new();
    let mut a = Vec::new();
    for _ in 0..50 {
        xs.push(-1.0);
        a.push(0u8);
        xs.push(1.0);
        a.push(1u8);
    }
    let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
    let m = fit_logistic(&x, &a, None).unwrap();
    assert!(m.converged);
    assert_abs_diff_eq!(m.coefficients[1], 0.0, epsilon = 1e-8);
    assert!(m.coefficients[0] > 0.0);
}

#[test]
fn logistic_recovers_generating_coefficients() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    let n = 10_000;
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
    let a: Vec<u8> = (0..n)
        .map(|i| u8::from(rng.random::<f64>() < logistic(0.5 + 1.0 * x[(i, 0)])))
        .collect();
    let m = fit_logistic(&x, &a, None).unwrap();
    assert!(m.converged);
    assert_abs_diff_eq!(m.coefficients[0], 1.0, epsilon = 0.1);
    assert_abs_diff_eq!(m.coefficients[1], 0.5, epsilon = 0.1);
}

#[test]
fn logistic_score_equations_hold_at_convergence() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let n = 600;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
    let a: Vec<u8> = (0..n)
        .map(|i| u8::from(rng.random::<f64>() < logistic(0.3 - 0.8 * x[(i, 0)] + 0.4 * x[(i, 1)])))
        .collect();
    let m = fit_logistic(&x, &a, None).unwrap();
    assert!(m.converged);
    // Unclipped probabilities must satisfy sum (a_i - p_i) [x_i, 1] = 0.
    let mut score = [0.0f64; 3];
    for i in 0..n {
        let lin = m.coefficients[0] * x[(i, 0)] + m.coefficients[1] * x[(i, 1)] + m.coefficients[2];
        let r = a[i] as f64 - logistic(lin);
        score[0] += r * x[(i, 0)];
        score[1] += r * x[(i, 1)];
        score[2] += r;
    }
    for s in score {
        assert!(s.abs() < 1e-6, "score {s}");
    }
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let n = 200;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.5..1.5));
    let a: Vec<u8> = (0..n)
        .map(|i| u8::from(rng.random::<f64>() < logistic(0.2 + x[(i, 0)] - 0.5 * x[(i, 1)])))
        .collect();
    let m = fit_logistic(&x, &a, None).unwrap();

    let loglik = |beta: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let lin = beta[0] * x[(i, 0)] + beta[1] * x[(i, 1)] + beta[2];
                let p = logistic(lin);
                if a[i] == 1 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum()
    };
    let beta: Vec<f64> = m.coefficients.iter().copied().collect();
    // Analytic gradient is ~0 at the optimum; the centered difference must
    // agree to high relative precision against the curvature scale.
    for j in 0..3 {
        let mut up = beta.clone();
        let mut dn = beta.clone();
        up[j] += 1e-5;
        dn[j] -= 1e-5;
        let fd = (loglik(&up) - loglik(&dn)) / 2e-5;
        // analytic gradient at convergence is < 1e-8 in each coordinate
        assert!(fd.abs() < 1e-3, "finite difference {fd} at coordinate {j}");
    }
}

#[test]
fn logistic_single_class_is_rejected() {
    let x = DMatrix::from_column_slice(6, 1, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    let err = fit_logistic(&x, &[1, 1, 1, 1, 1, 1], None).unwrap_err();
    assert!(err.to_string().contains("single-class"), "{err}");
}

#[test]
fn logistic_separable_data_errors_advising_ridge() {
    // Perfectly separated at x = 0 with razor-thin margins: the MLE diverges
    // and the coefficients blow up long before the score can settle.
    let mut xs = Vec::new();
    let mut a = Vec::new();
    for i in 0..40 {
        let v = 0.001 + (i % 7) as f64 * 0.0005;
        xs.push(-v);
        a.push(0u8);
        xs.push(v);
        a.push(1u8);
    }
    let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
    let err = fit_logistic(&x, &a, None).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("ridge"), "{msg}");

    // A small penalty makes the same data fittable.
    let opts = LogisticOptions {
        ridge: 1.0,
        ..LogisticOptions::default()
    };
    let m = fit_logistic_with(&x, &a, None, &opts).unwrap();
    assert!(m.coefficients[0] > 0.0);
}

#[test]
fn predict_proba_clips_and_centers() {
    let mut xs = Vec::new();
    let mut a = Vec::new();
    for i in 0..30 {
        let v = (i as f64 - 15.0) / 5.0;
        xs.push(v);
        a.push(u8::from(i % 2 == 0));
    }
    let x = DMatrix::from_column_slice(30, 1, &xs);
    let m = fit_logistic(&x, &a, None).unwrap();

    // Zero-coefficient model: everything is 0.5.
    let zero = itr_core::glm::LogisticModel {
        coefficients: nalgebra::DVector::zeros(2),
        converged: true,
        iterations: 0,
        max_score: 0.0,
    };
    let probe = DMatrix::from_column_slice(3, 1, &[-4.0, 0.0, 9.0]);
    let p = zero.predict_proba(&probe, 0.01).unwrap();
    assert!(p.iter().all(|&v| v == 0.5));

    // Huge linear predictor clips to exactly 1 - eps.
    let big = itr_core::glm::LogisticModel {
        coefficients: nalgebra::DVector::from_column_slice(&[50.0, 0.0]),
        converged: true,
        iterations: 0,
        max_score: 0.0,
    };
    let p = big.predict_proba(&DMatrix::from_column_slice(1, 1, &[10.0]), 0.01).unwrap();
    assert_eq!(p[0], 0.99);
    let p = big.predict_proba(&DMatrix::from_column_slice(1, 1, &[-10.0]), 0.01).unwrap();
    assert_eq!(p[0], 0.01);

    // Invalid clip values are rejected.
    assert!(m.predict_proba(&probe, 0.0).is_err());
    assert!(m.predict_proba(&probe, 0.5).is_err());
}
