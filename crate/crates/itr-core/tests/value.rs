use itr_core::ate::aipw_ate;
use itr_core::data::{Dataset, PatientRecord, Population};
use itr_core::rule::LinearItr;
use itr_core::value::{caipw_value, OutcomePredictions, PolicyValueData};
use proptest::prelude::*;

// The 6-unit hand instance. Every reference number below was computed
// term-by-term in exact rational arithmetic before this module was written.
const A6: [u8; 6] = [1, 0, 1, 0, 1, 0];
const Y6: [f64; 6] = [1.0, 0.0, 0.5, 1.0, 0.0, 0.75];
const PI6: [f64; 6] = [0.5, 0.4, 0.7, 0.3, 0.6, 0.55];
const M6: [f64; 6] = [0.3, 0.2, 0.6, 0.8, 0.1, 0.55];
const W6: [f64; 6] = [0.30, 0.25, 0.20, 0.10, 0.10, 0.05];
const X6: [f64; 6] = [2.0, -1.0, 0.5, -2.0, 3.0, 0.0];

/// V̂ for the rule score = x − 0.25 (assignments 1,0,1,0,1,0) with the hand
/// weights: exactly 2591/3600.
const V_HAND: f64 = 0.719_722_222_222_222_26;
const V_ALL_UNIFORM: f64 = 0.606_746_031_746_031_7;
const V_NONE_UNIFORM: f64 = 0.491_137_566_137_566_15;

fn hand_dataset() -> Dataset {
    let records = (0..6)
        .map(|i| PatientRecord {
            id: format!("u{}", i + 1),
            covariates: vec![X6[i]],
            treatment: Some(A6[i]),
            outcome: Some(Y6[i]),
            population: Population::Source,
        })
        .collect();
    Dataset::new(vec!["x".into()], records).unwrap()
}

fn hand_rule() -> LinearItr {
    LinearItr::new(vec!["x".into()], vec![1.0, -0.25]).unwrap()
}

#[test]
fn six_unit_hand_instance_matches_the_term_by_term_oracle() {
    let est = caipw_value(
        &hand_rule(),
        &hand_dataset(),
        Some(&W6),
        &PI6,
        &OutcomePredictions::Pooled(M6.to_vec()),
    )
    .unwrap();
    assert!(est.weighted);
    assert_eq!(est.n_source_used, 6);
    assert!((est.value - V_HAND).abs() < 1e-12, "{}", est.value);
}

#[test]
fn six_unit_arm_specific_variant_matches_its_oracle() {
    let m1 = vec![0.4, 0.2, 0.7, 0.9, 0.2, 0.6];
    let m0 = vec![0.2, 0.1, 0.5, 0.7, 0.0, 0.5];
    let est = caipw_value(
        &hand_rule(),
        &hand_dataset(),
        Some(&W6),
        &PI6,
        &OutcomePredictions::ArmSpecific {
            treated: m1,
            control: m0,
        },
    )
    .unwrap();
    assert!((est.value - 0.698_492_063_492_063_5).abs() < 1e-12, "{}", est.value);
}

#[test]
fn interpolating_predictions_reduce_to_the_weighted_mean_outcome() {
    // m̂ = Y makes the residual vanish: V̂ = Σ ŵᵢYᵢ for any rule at all.
    let expected: f64 = W6.iter().zip(Y6).map(|(w, y)| w * y).sum();
    let data = PolicyValueData::new(
        &A6,
        &Y6,
        &PI6,
        &OutcomePredictions::Pooled(Y6.to_vec()),
        Some(&W6),
    )
    .unwrap();
    for d in [[1, 0, 1, 0, 1, 0], [1; 6], [0; 6], [0, 1, 1, 0, 0, 1]] {
        let v = data.value_of_assignments(&d).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }
    assert!((expected - 0.5375).abs() < 1e-15);
}

#[test]
fn treat_everyone_with_half_propensity_and_zero_model_is_mean_2ay() {
    let data = PolicyValueData::new(
        &A6,
        &Y6,
        &[0.5; 6],
        &OutcomePredictions::Pooled(vec![0.0; 6]),
        None,
    )
    .unwrap();
    let v = data.value_of_assignments(&[1; 6]).unwrap();
    let expected: f64 =
        A6.iter().zip(Y6).map(|(&a, y)| 2.0 * f64::from(a) * y).sum::<f64>() / 6.0;
    assert!((v - expected).abs() < 1e-15);
    assert!((v - 0.5).abs() < 1e-15);
}

#[test]
fn treat_all_minus_treat_none_with_uniform_weights_is_the_aipw_effect() {
    let data = PolicyValueData::new(
        &A6,
        &Y6,
        &PI6,
        &OutcomePredictions::Pooled(M6.to_vec()),
        None,
    )
    .unwrap();
    let v_all = data.value_of_assignments(&[1; 6]).unwrap();
    let v_none = data.value_of_assignments(&[0; 6]).unwrap();
    assert!((v_all - V_ALL_UNIFORM).abs() < 1e-12);
    assert!((v_none - V_NONE_UNIFORM).abs() < 1e-12);

    let aipw = aipw_ate(&A6, &Y6, &PI6, &M6, &M6).unwrap();
    assert!(((v_all - v_none) - aipw.tau_hat).abs() < 1e-12);

    // The same identity holds with genuinely arm-specific predictions.
    let m1 = vec![0.4, 0.2, 0.7, 0.9, 0.2, 0.6];
    let m0 = vec![0.2, 0.1, 0.5, 0.7, 0.0, 0.5];
    let arm = PolicyValueData::new(
        &A6,
        &Y6,
        &PI6,
        &OutcomePredictions::ArmSpecific {
            treated: m1.clone(),
            control: m0.clone(),
        },
        None,
    )
    .unwrap();
    let diff = arm.value_of_assignments(&[1; 6]).unwrap()
        - arm.value_of_assignments(&[0; 6]).unwrap();
    let aipw_arm = aipw_ate(&A6, &Y6, &PI6, &m1, &m0).unwrap();
    assert!((diff - aipw_arm.tau_hat).abs() < 1e-12);
    assert!((diff - 0.127_248_677_248_677_25).abs() < 1e-12);
}

#[test]
fn rule_rescaling_is_bit_for_bit_invariant() {
    let ds = hand_dataset();
    let m = OutcomePredictions::Pooled(M6.to_vec());
    let base = caipw_value(&hand_rule(), &ds, Some(&W6), &PI6, &m).unwrap();
    for c in [2.0, 0.125, 777.0] {
        let scaled = LinearItr::new(vec!["x".into()], vec![c, -0.25 * c]).unwrap();
        let v = caipw_value(&scaled, &ds, Some(&W6), &PI6, &m).unwrap();
        assert_eq!(v.value.to_bits(), base.value.to_bits());
    }
}

#[test]
fn coefficient_fast_path_matches_the_rule_path_bit_for_bit() {
    let data = PolicyValueData::new(
        &A6,
        &Y6,
        &PI6,
        &OutcomePredictions::Pooled(M6.to_vec()),
        Some(&W6),
    )
    .unwrap();
    let x = nalgebra::DMatrix::from_column_slice(6, 1, &X6);
    for eta in [[1.0, -0.25], [-0.3, 0.7], [0.0, 1e-9], [2.5, 0.0]] {
        let rule = LinearItr::new(vec!["x".into()], eta.to_vec()).unwrap();
        let slow = data.value_of_rule(&rule, &x).unwrap();
        let fast = data.value_of_coefficients(&eta, &x).unwrap();
        assert_eq!(slow.to_bits(), fast.to_bits());
    }
    assert!(data.value_of_coefficients(&[1.0], &x).is_err());
}

#[test]
fn bad_inputs_are_rejected_with_useful_messages() {
    let ds = hand_dataset();
    let m = OutcomePredictions::Pooled(M6.to_vec());

    // Unnormalized weights.
    let w_bad = [0.5, 0.5, 0.5, 0.1, 0.1, 0.05];
    let err = caipw_value(&hand_rule(), &ds, Some(&w_bad), &PI6, &m).unwrap_err();
    assert!(err.to_string().contains("sum 1"), "{err}");

    // Propensity on the boundary.
    let pi_bad = [0.5, 1.0, 0.7, 0.3, 0.6, 0.55];
    let err = caipw_value(&hand_rule(), &ds, Some(&W6), &pi_bad, &m).unwrap_err();
    assert!(err.to_string().contains("clip"), "{err}");

    // Wrong prediction length.
    let m_bad = OutcomePredictions::Pooled(vec![0.0; 5]);
    assert!(caipw_value(&hand_rule(), &ds, Some(&W6), &PI6, &m_bad).is_err());

    // Covariate name mismatch between rule and data.
    let wrong_rule = LinearItr::new(vec!["z".into()], vec![1.0, 0.0]).unwrap();
    let err = caipw_value(&wrong_rule, &ds, Some(&W6), &PI6, &m).unwrap_err();
    assert!(err.to_string().contains("mismatch"), "{err}");
}

/// Strategy for one random value-function instance of size n.
fn instance(n: usize) -> impl Strategy<Value = (Vec<u8>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (
        proptest::collection::vec(0u8..=1, n),
        proptest::collection::vec(-2.0f64..2.0, n),
        proptest::collection::vec(0.05f64..0.95, n),
        proptest::collection::vec(-1.0f64..1.0, n),
        proptest::collection::vec(0.01f64..1.0, n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Scale invariance: multiplying every rule coefficient by c > 0 leaves the
    // value bit-for-bit unchanged.
    #[test]
    fn value_is_invariant_to_positive_rule_rescaling(
        (a, y, pi, m, raw_w) in instance(8),
        eta in proptest::collection::vec(-1.0f64..1.0, 3),
        c in 1e-4f64..1e4,
        xs in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), 8),
    ) {
        prop_assume!(eta.iter().any(|&v| v != 0.0));
        let wsum: f64 = raw_w.iter().sum();
        let w: Vec<f64> = raw_w.iter().map(|v| v / wsum).collect();
        let data = PolicyValueData::new(
            &a, &y, &pi, &OutcomePredictions::Pooled(m), Some(&w),
        ).unwrap();
        let x = nalgebra::DMatrix::from_fn(8, 2, |i, j| xs[i][j]);
        let names = vec!["u".to_string(), "v".to_string()];
        let rule = LinearItr::new(names.clone(), eta.clone()).unwrap();
        let scaled = LinearItr::new(names, eta.iter().map(|v| v * c).collect()).unwrap();
        let v1 = data.value_of_rule(&rule, &x).unwrap();
        let v2 = data.value_of_rule(&scaled, &x).unwrap();
        prop_assert_eq!(v1.to_bits(), v2.to_bits());
    }

    // Weight linearity: V̂ under a mixture of weight vectors equals the same
    // mixture of the two values.
    #[test]
    fn value_is_linear_in_the_weights(
        (a, y, pi, m, raw_w1) in instance(8),
        raw_w2 in proptest::collection::vec(0.01f64..1.0, 8),
        alpha in 0.0f64..1.0,
        d in proptest::collection::vec(0u8..=1, 8),
    ) {
        let norm = |raw: &[f64]| -> Vec<f64> {
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        };
        let w1 = norm(&raw_w1);
        let w2 = norm(&raw_w2);
        let mix: Vec<f64> = w1
            .iter()
            .zip(&w2)
            .map(|(u, v)| alpha * u + (1.0 - alpha) * v)
            .collect();
        let preds = OutcomePredictions::Pooled(m);
        let v1 = PolicyValueData::new(&a, &y, &pi, &preds, Some(&w1)).unwrap()
            .value_of_assignments(&d).unwrap();
        let v2 = PolicyValueData::new(&a, &y, &pi, &preds, Some(&w2)).unwrap()
            .value_of_assignments(&d).unwrap();
        let vm = PolicyValueData::new(&a, &y, &pi, &preds, Some(&mix)).unwrap()
            .value_of_assignments(&d).unwrap();
        let expected = alpha * v1 + (1.0 - alpha) * v2;
        prop_assert!((vm - expected).abs() < 1e-10, "{} vs {}", vm, expected);
    }
}
