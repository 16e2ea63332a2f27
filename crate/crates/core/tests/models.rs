use nalgebra::DVector;
use qssvm_core::datagen;
use qssvm_core::diagnostics::{self, curvature};
use qssvm_core::halfvec::{hvec_index, SymmetricMatrix};
use qssvm_core::models::{self, sparsity_pattern, QuadSurfaceModel, TrainConfig, Variant};
use qssvm_core::{Dataset, Error};

fn two_points() -> Dataset {
    Dataset::from_rows(&[vec![-1.0], vec![1.0]], vec![-1, 1]).unwrap()
}

#[test]
fn large_lambda_reduces_to_the_svm() {
    let ds = two_points();
    let svm = models::train(&ds, &TrainConfig::new(Variant::Svm)).unwrap();
    let l1 = models::train(&ds, &TrainConfig::new(Variant::L1Qssvm).with_lambda(1e6)).unwrap();
    assert!(l1.model.hvec().max_abs() <= 1e-6);
    assert!((&l1.model.b - &svm.model.b).amax() <= 1e-4);
    assert!((l1.model.c - svm.model.c).abs() <= 1e-4);
    assert!((svm.objective - 0.5).abs() <= 1e-7);
}

#[test]
fn ring_slacks_vanish_above_the_mu_bound() {
    let ds = datagen::gen_ring(1.0, 3.0, 20, 20, 5).unwrap();
    let lambda = 0.5;
    let bound = models::mu_vanishing_bound(&ds, lambda).unwrap();
    assert!(bound.is_finite() && bound >= 0.0);
    let cfg = TrainConfig::new(Variant::L1Sqssvm)
        .with_lambda(lambda)
        .with_mu(2.0 * bound.max(1e-6));
    let r = models::train(&ds, &cfg).unwrap();
    assert!(r.xi.sum() <= 1e-6, "sum xi = {}", r.xi.sum());
    use diagnostics::SeparabilityKind::{Linear, Quadratic};
    assert_eq!(
        diagnostics::check_separability(&ds, Linear).unwrap().kind,
        diagnostics::SeparabilityKind::None
    );
    assert_eq!(
        diagnostics::check_separability(&ds, Quadratic)
            .unwrap()
            .kind,
        Quadratic
    );
}

#[test]
fn mu_bound_is_finite_on_linear_data() {
    let ds = datagen::gen_linear_separable(3, 15, 15, 4).unwrap();
    let pi = models::mu_vanishing_bound(&ds, 1.0).unwrap();
    assert!(pi.is_finite() && pi >= 0.0);
}

#[test]
fn lambda_bound_is_scale_invariant() {
    // u* scales like 1/t while the data norms scale like t^2
    let ds = datagen::gen_linear_separable(2, 12, 12, 9).unwrap();
    let base = models::lambda_equivalence_bound(&ds).unwrap();
    assert!(base.is_finite() && base > 0.0);
    for t in [0.1, 3.0] {
        let scaled = models::lambda_equivalence_bound(&ds.scaled(t)).unwrap();
        assert!(
            (scaled - base).abs() <= 1e-5 * base,
            "t={t}: {scaled} vs {base}"
        );
    }
}

#[test]
fn every_variant_passes_its_own_kkt_check() {
    let ds = datagen::gen_linear_separable(2, 10, 12, 21).unwrap();
    let n = ds.dim();
    for variant in Variant::ALL {
        let mut cfg = TrainConfig::new(variant).with_mu(4.0).with_lambda(0.25);
        if variant == Variant::Rqssvm {
            cfg = cfg.with_zero_set(vec![hvec_index(n, 1, 0)]);
        }
        let r = models::train(&ds, &cfg).unwrap();
        assert!(r.kkt.worst_relative() <= 1e-6, "{variant}: {:?}", r.kkt);
        let again = diagnostics::verify_kkt(&ds, &r);
        assert!(again.worst_relative() <= 1e-6, "{variant}: {again:?}");
        if variant.is_linear() {
            assert_eq!(curvature(&r.model), 0.0);
        }
    }
}

#[test]
fn restricted_model_pins_zero_set_exactly() {
    let ds = datagen::gen_ring(1.0, 2.0, 15, 15, 8).unwrap();
    let zero = vec![hvec_index(2, 1, 0)];
    let cfg = TrainConfig::new(Variant::Rqssvm)
        .with_zero_set(zero.clone())
        .with_lambda(0.0);
    let r = models::train(&ds, &cfg).unwrap();
    for &j in &zero {
        assert_eq!(r.model.hvec().as_slice()[j], 0.0);
    }
    assert!(r.zero_set_multipliers.is_some());
}

#[test]
fn restricted_and_unrestricted_agree_above_multiplier_bound() {
    let ds = datagen::gen_linear_separable(3, 15, 15, 31).unwrap();
    let lambda = 64.0;
    let free = models::train(&ds, &TrainConfig::new(Variant::L1Qssvm).with_lambda(lambda)).unwrap();
    let zero = sparsity_pattern(&free.model, 1e-6);
    assert!(!zero.is_empty() && zero.len() < 6, "{zero:?}");
    let restricted = models::train(
        &ds,
        &TrainConfig::new(Variant::Rqssvm)
            .with_lambda(lambda)
            .with_zero_set(zero),
    )
    .unwrap();
    let beta = restricted.zero_set_multipliers.as_ref().unwrap();
    assert!(beta.amax() <= lambda * (1.0 + 1e-6));
    let gap = (free.objective - restricted.objective).abs() / (1.0 + free.objective.abs());
    assert!(gap <= 1e-6, "objective gap {gap}");
}

#[test]
fn hard_quadratic_model_on_conflicting_labels_is_infeasible() {
    let ds = Dataset::from_rows(
        &[
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![2.0, 0.5],
        ],
        vec![1, -1, 1, -1],
    )
    .unwrap();
    for variant in [Variant::Qssvm, Variant::L1Qssvm, Variant::Svm] {
        let err = models::train(&ds, &TrainConfig::new(variant).with_lambda(1.0)).unwrap_err();
        assert!(
            matches!(err, Error::HardMarginInfeasible),
            "{variant}: {err:?}"
        );
    }
    let soft = models::train(&ds, &TrainConfig::new(Variant::Sqssvm).with_mu(2.0)).unwrap();
    assert!(soft.xi.sum() > 0.5);
}

#[test]
fn trained_model_survives_text_round_trip() {
    let ds = datagen::gen_ring(1.0, 2.0, 10, 10, 3).unwrap();
    let r = models::train(
        &ds,
        &TrainConfig::new(Variant::L1Sqssvm)
            .with_lambda(0.1)
            .with_mu(8.0),
    )
    .unwrap();
    let back = QuadSurfaceModel::from_text(&r.model.to_text()).unwrap();
    assert_eq!(back, r.model);
    for i in 0..ds.len() {
        assert_eq!(
            back.predict(&ds.sample(i)).unwrap(),
            r.model.predict(&ds.sample(i)).unwrap()
        );
    }
}

#[test]
fn sparsity_pattern_examples() {
    let zero = QuadSurfaceModel::new(SymmetricMatrix::zeros(3), DVector::zeros(3), 0.0).unwrap();
    assert_eq!(sparsity_pattern(&zero, 1e-6), (0..6).collect::<Vec<_>>());
    let diag = SymmetricMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let model = QuadSurfaceModel::new(diag, DVector::zeros(2), 0.0).unwrap();
    assert_eq!(
        sparsity_pattern(&model, 1e-6),
        vec![hvec_index(2, 1, 0), hvec_index(2, 1, 1)]
    );
}

#[test]
fn prediction_examples() {
    let line = QuadSurfaceModel::linear(DVector::from_vec(vec![1.0]), 0.0);
    assert_eq!(line.predict(&DVector::from_vec(vec![2.0])).unwrap(), 1);
    let circle =
        QuadSurfaceModel::new(SymmetricMatrix::identity(2), DVector::zeros(2), -0.5).unwrap();
    assert_eq!(
        circle.predict(&DVector::from_vec(vec![0.0, 0.0])).unwrap(),
        -1
    );
    assert_eq!(
        circle.eval(&DVector::from_vec(vec![1.0, 0.0])).unwrap(),
        0.0
    );
    assert_eq!(
        circle.predict(&DVector::from_vec(vec![1.0, 0.0])).unwrap(),
        1
    );
    assert!(circle.predict(&DVector::from_vec(vec![1.0])).is_err());
}
