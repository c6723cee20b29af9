//! Shared oracles for the integration tests.
#![allow(dead_code)]

use gcnloc::graph::{augment_normalize, row_normalize};
use gcnloc::model::{anchor_loss, backward, forward, glorot_init, ModelConfig, ModelKind, Weights};
use gcnloc::rng::seeded;
use gcnloc::scene::Scene;
use ndarray::Array2;
use rand::Rng;

pub const STEP: f64 = 1e-5;

pub struct Instance {
    pub cfg: ModelConfig,
    pub norm_adj: Option<Array2<f64>>,
    pub features: Array2<f64>,
    pub weights: Weights,
    pub scene: Scene,
}

pub fn instance(kind: ModelKind, n: usize, hidden: usize, seed: u64) -> Instance {
    let mut rng = seeded(seed);
    let mut adj = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.4) {
                adj[[i, j]] = 1.0;
                adj[[j, i]] = 1.0;
            }
        }
    }
    let raw = Array2::from_shape_fn((n, n), |(i, j)| {
        if adj[[i, j]] > 0.0 {
            rng.random_range(0.1..2.0)
        } else {
            0.0
        }
    });
    let positions = Array2::from_shape_simple_fn((n, 2), || rng.random_range(0.0..5.0));
    let n_anchors = rng.random_range(1..n);
    let cfg = ModelConfig::two_layer(kind, n, hidden, 0.0).unwrap();
    let mut weights = glorot_init(&cfg.layer_dims, &mut rng).unwrap();
    // scale up so the ReLU pattern is nontrivial and outputs reach the targets
    for w in weights.layers_mut() {
        w.mapv_inplace(|v| v * 3.0);
    }
    Instance {
        norm_adj: match kind {
            ModelKind::Gcn => Some(augment_normalize(&adj.view()).unwrap()),
            ModelKind::Mlp => None,
        },
        features: row_normalize(&raw.view()) + 0.05,
        weights,
        scene: Scene::new(positions, n_anchors, 5.0).unwrap(),
        cfg,
    }
}

pub fn loss(inst: &Instance, weights: &Weights) -> f64 {
    let est = forward(
        &inst.cfg,
        inst.norm_adj.as_ref().map(|a| a.view()).as_ref(),
        &inst.features.view(),
        weights,
        None,
    )
    .unwrap();
    anchor_loss(&est, &inst.scene)
}

/// Largest relative error over all gradient entries; entries whose
/// magnitude is below `floor` are compared absolutely.
pub fn max_relative_error(inst: &Instance) -> f64 {
    let analytic = backward(
        &inst.cfg,
        inst.norm_adj.as_ref().map(|a| a.view()).as_ref(),
        &inst.features.view(),
        &inst.weights,
        None,
        &inst.scene,
    )
    .unwrap();
    let floor = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        for ((i, j), &ga) in g.indexed_iter() {
            let mut plus = inst.weights.clone();
            plus.layers_mut()[k][[i, j]] += STEP;
            let mut minus = inst.weights.clone();
            minus.layers_mut()[k][[i, j]] -= STEP;
            let fd = (loss(inst, &plus) - loss(inst, &minus)) / (2.0 * STEP);
            let scale = ga.abs().max(fd.abs()).max(floor);
            worst = worst.max((ga - fd).abs() / scale);
        }
    }
    worst
}

