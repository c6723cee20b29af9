use ndarray::{Array2, Zip};

use super::Weights;
use crate::error::{Error, Result};
use super::TrainConfig;

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(weights: &Weights) -> Self {
        let zeros: Vec<Array2<f64>> = weights
            .layers()
            .iter()
            .map(|w| Array2::zeros(w.dim()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    weights: &mut Weights,
    grads: &[Array2<f64>],
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let layers = weights.layers_mut();
    if grads.len() != layers.len() || state.m.len() != layers.len() {
        return Err(Error::config("gradient/state layer count mismatch"));
    }
    for ((w, g), m) in layers.iter().zip(grads).zip(&state.m) {
        Error::check_shape("adam gradient", w.dim(), g.dim())?;
        Error::check_shape("adam state", w.dim(), m.dim())?;
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (cfg.learning_rate, cfg.adam_eps);
    for (((w, g), m), v) in layers
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
    Ok(())
}
