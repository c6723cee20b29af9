use std::io::Write;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, anchor_loss, backward_from_cache, forward, forward_cached, glorot_init,
    AdamState, DropoutMasks, ModelConfig, ModelKind, PositionEstimate, Weights,
};
use crate::error::{Error, Result};
use crate::graph::ThresholdedGraph;
use crate::rng::{self, Stream};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps >= 0.0) {
            return Err(Error::config("Adam epsilon must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: Weights,
    /// Anchor loss of each epoch's (dropout-masked) forward pass.
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().expect("at least one epoch")
    }

    /// `epoch,loss` rows, epochs numbered from 1.
    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss"])?;
        for (i, loss) in self.loss_history.iter().enumerate() {
            w.write_record([(i + 1).to_string(), loss.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn propagation<'a>(cfg: &ModelConfig, graph: &'a ThresholdedGraph) -> Option<ArrayView2<'a, f64>> {
    match cfg.kind {
        ModelKind::Gcn => Some(graph.norm_adjacency()),
        ModelKind::Mlp => None,
    }
}

/// Full-batch training on the anchor rows of `scene`. Agent positions are
/// never read.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    graph: &ThresholdedGraph,
    scene: &Scene,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    let n = graph.n();
    if scene.n_nodes() != n {
        return Err(Error::config(format!(
            "graph has {n} nodes but scene has {}",
            scene.n_nodes()
        )));
    }
    let features = graph.input_features(model_cfg.feature_norm);
    let features = features.view();
    let norm_adj = propagation(model_cfg, graph);

    let mut rng = rng::stream(train_cfg.seed, Stream::Training);
    let mut weights = glorot_init(&model_cfg.layer_dims, &mut rng)?;
    let mut state = AdamState::new(&weights);
    let mut loss_history = Vec::with_capacity(train_cfg.epochs);
    let use_dropout = model_cfg.dropout_rate > 0.0;

    for epoch in 0..train_cfg.epochs {
        let masks = if use_dropout {
            Some(DropoutMasks::sample(model_cfg, n, &mut rng)?)
        } else {
            None
        };
        let cache = forward_cached(
            model_cfg,
            norm_adj.as_ref(),
            &features,
            &weights,
            masks.as_ref(),
        )?;
        let loss = anchor_loss(
            &PositionEstimate {
                coords: cache.output.clone(),
            },
            scene,
        );
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                loss,
            });
        }
        loss_history.push(loss);
        let grads = backward_from_cache(
            model_cfg,
            norm_adj.as_ref(),
            &weights,
            masks.as_ref(),
            &cache,
            scene,
        );
        adam_step(&mut weights, &grads, &mut state, train_cfg)?;
    }
    Ok(TrainOutcome {
        weights,
        loss_history,
    })
}

/// Dropout-free forward pass over every node.
pub fn predict(
    model_cfg: &ModelConfig,
    graph: &ThresholdedGraph,
    weights: &Weights,
) -> Result<PositionEstimate> {
    let features = graph.input_features(model_cfg.feature_norm);
    forward(
        model_cfg,
        propagation(model_cfg, graph).as_ref(),
        &features.view(),
        weights,
        None,
    )
}

/// Serialized trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub threshold: f64,
    pub weights: Weights,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        ckpt.model.validate()?;
        ckpt.train.validate()?;
        let weights = Weights::new(ckpt.weights.layers().to_vec())?;
        weights.check_against(&ckpt.model)?;
        Ok(ckpt)
    }
}
