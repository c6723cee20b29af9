//! Analytic gradients against central finite differences.

mod common;

use common::{instance, max_relative_error, Instance};
use gcnloc::model::{backward, glorot_init, ModelConfig, ModelKind};
use gcnloc::rng::seeded;
use ndarray::Array2;

#[test]
fn gcn_gradients_match_finite_differences() {
    for seed in 0..12 {
        let n = 3 + (seed as usize % 6);
        let hidden = 1 + (seed as usize % 4);
        let err = max_relative_error(&instance(ModelKind::Gcn, n, hidden, seed));
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 100..112 {
        let n = 3 + (seed as usize % 6);
        let hidden = 1 + (seed as usize % 4);
        let err = max_relative_error(&instance(ModelKind::Mlp, n, hidden, seed));
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn mlp_gradients_equal_gcn_with_identity_propagation() {
    let inst = instance(ModelKind::Mlp, 6, 3, 7);
    let gcn_cfg = ModelConfig::two_layer(ModelKind::Gcn, 6, 3, 0.0).unwrap();
    let eye = Array2::eye(6);
    let mlp = backward(&inst.cfg, None, &inst.features.view(), &inst.weights, None, &inst.scene)
        .unwrap();
    let gcn = backward(
        &gcn_cfg,
        Some(&eye.view()),
        &inst.features.view(),
        &inst.weights,
        None,
        &inst.scene,
    )
    .unwrap();
    for (a, b) in mlp.iter().zip(&gcn) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn deeper_network_gradients() {
    let mut rng = seeded(55);
    let n = 5;
    let dims = vec![n, 4, 3, 2];
    for kind in [ModelKind::Gcn, ModelKind::Mlp] {
        let base = instance(kind, n, 3, 56);
        let cfg = ModelConfig::new(kind, dims.clone(), 0.0).unwrap();
        let mut weights = glorot_init(&dims, &mut rng).unwrap();
        for w in weights.layers_mut() {
            w.mapv_inplace(|v| v * 3.0);
        }
        let inst = Instance {
            cfg,
            weights,
            ..base
        };
        let err = max_relative_error(&inst);
        assert!(err < 1e-4, "{kind}: relative error {err}");
    }
}
