//! GCN and MLP coordinate regressors with hand-derived gradients.
//!
//! A `K`-layer model maps the row-normalized sparse feature matrix to an
//! `N × 2` coordinate estimate. Every layer optionally propagates its input
//! through `Â` (GCN) before the linear map; hidden layers apply ReLU, the
//! output layer is linear. With dropout, each layer input is masked with
//! inverted scaling.

mod adam;
mod train;

pub use adam::{adam_step, AdamState};
pub use train::{predict, train, Checkpoint, TrainConfig, TrainOutcome};

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RowNorm;
use crate::scene::Scene;

pub const OUTPUT_DIM: usize = 2;
pub const DEFAULT_HIDDEN: usize = 2000;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Mlp,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// `[D_0 = N, D_1, ..., D_K = 2]`.
    pub layer_dims: Vec<usize>,
    pub dropout_rate: f64,
    #[serde(default)]
    pub activation: Activation,
    /// Row normalization applied to the sparse features before the first layer.
    #[serde(default)]
    pub feature_norm: RowNorm,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, layer_dims: Vec<usize>, dropout_rate: f64) -> Result<Self> {
        let cfg = ModelConfig {
            kind,
            layer_dims,
            dropout_rate,
            activation: Activation::Relu,
            feature_norm: RowNorm::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// One hidden layer of width `hidden` on `n` input features.
    pub fn two_layer(kind: ModelKind, n: usize, hidden: usize, dropout_rate: f64) -> Result<Self> {
        Self::new(kind, vec![n, hidden, OUTPUT_DIM], dropout_rate)
    }

    pub fn with_feature_norm(self, feature_norm: RowNorm) -> Self {
        ModelConfig {
            feature_norm,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::config("model needs at least one layer"));
        }
        if self.layer_dims.last() != Some(&OUTPUT_DIM) {
            return Err(Error::config(format!(
                "final layer width must be {OUTPUT_DIM}, got {:?}",
                self.layer_dims.last()
            )));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }
}

/// Per-layer weight matrices `W^(k)` of shape `D_{k-1} × D_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    layers: Vec<Array2<f64>>,
}

impl Weights {
    pub fn new(layers: Vec<Array2<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("weights need at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Shape {
                    context: "weight chain",
                    expected: (pair[0].ncols(), pair[1].ncols()),
                    actual: pair[1].dim(),
                });
            }
        }
        Ok(Weights { layers })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Weights {
            layers: dims
                .windows(2)
                .map(|d| Array2::zeros((d[0], d[1])))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].nrows()];
        dims.extend(self.layers.iter().map(|w| w.ncols()));
        dims
    }

    fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        if self.dims() != cfg.layer_dims {
            return Err(Error::config(format!(
                "weights have dims {:?}, model expects {:?}",
                self.dims(),
                cfg.layer_dims
            )));
        }
        Ok(())
    }
}

/// Uniform Glorot initialisation, `U[-b, b]` with `b = √(6 / (fan_in + fan_out))`.
pub fn glorot_init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Weights> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::config(format!("invalid layer dims {dims:?}")));
    }
    let layers = dims
        .windows(2)
        .map(|d| {
            let bound = (6.0 / (d[0] + d[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Array2::from_shape_simple_fn((d[0], d[1]), || dist.sample(rng))
        })
        .collect();
    Ok(Weights { layers })
}

/// Inverted-dropout masks, one per layer input. Entries are `0` or `1/(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    layers: Vec<Array2<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(cfg: &ModelConfig, n: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let keep = 1.0 - cfg.dropout_rate;
        let scale = 1.0 / keep;
        let keeper = Bernoulli::new(keep).map_err(|e| Error::config(e.to_string()))?;
        let layers = cfg.layer_dims[..cfg.n_layers()]
            .iter()
            .map(|&d| {
                Array2::from_shape_simple_fn((n, d), || {
                    if keeper.sample(rng) {
                        scale
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Ok(DropoutMasks { layers })
    }

    pub fn layers(&self) -> &[Array2<f64>] {
        &self.layers
    }
}

/// Estimated coordinates for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionEstimate {
    pub coords: Array2<f64>,
}

impl PositionEstimate {
    pub fn new(coords: Array2<f64>) -> Result<Self> {
        Error::check_shape("position estimate", (coords.nrows(), OUTPUT_DIM), coords.dim())?;
        Ok(PositionEstimate { coords })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|v| v.is_finite())
    }
}

/// Intermediates retained for the backward pass.
pub(crate) struct ForwardCache {
    /// Masked (and, for GCN, propagated) input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn check_inputs(
    cfg: &ModelConfig,
    norm_adj: Option<&ArrayView2<'_, f64>>,
    features: &ArrayView2<'_, f64>,
    weights: &Weights,
    masks: Option<&DropoutMasks>,
) -> Result<()> {
    cfg.validate()?;
    weights.check_against(cfg)?;
    let n = features.nrows();
    Error::check_shape("features", (n, cfg.input_dim()), features.dim())?;
    match (cfg.kind, norm_adj) {
        (ModelKind::Gcn, Some(a)) => Error::check_shape("norm_adj", (n, n), a.dim())?,
        (ModelKind::Gcn, None) => {
            return Err(Error::config("GCN forward requires the propagation matrix"))
        }
        (ModelKind::Mlp, Some(_)) => {
            return Err(Error::config("MLP forward takes no propagation matrix"))
        }
        (ModelKind::Mlp, None) => {}
    }
    if let Some(m) = masks {
        if m.layers.len() != cfg.n_layers() {
            return Err(Error::config("dropout mask count does not match layer count"));
        }
        for (k, mask) in m.layers.iter().enumerate() {
            Error::check_shape("dropout mask", (n, cfg.layer_dims[k]), mask.dim())?;
        }
    }
    Ok(())
}

pub(crate) fn forward_cached(
    cfg: &ModelConfig,
    norm_adj: Option<&ArrayView2<'_, f64>>,
    features: &ArrayView2<'_, f64>,
    weights: &Weights,
    masks: Option<&DropoutMasks>,
) -> Result<ForwardCache> {
    check_inputs(cfg, norm_adj, features, weights, masks)?;
    let k_layers = cfg.n_layers();
    let mut inputs = Vec::with_capacity(k_layers);
    let mut pre_activations = Vec::with_capacity(k_layers - 1);
    let mut h = features.to_owned();
    for (k, w) in weights.layers.iter().enumerate() {
        if let Some(m) = masks {
            h *= &m.layers[k];
        }
        let p = match norm_adj {
            Some(a) => a.dot(&h),
            None => h,
        };
        let z = p.dot(w);
        inputs.push(p);
        if k + 1 < k_layers {
            h = z.mapv(|v| v.max(0.0));
            pre_activations.push(z);
        } else {
            return Ok(ForwardCache {
                inputs,
                pre_activations,
                output: z,
            });
        }
    }
    unreachable!("validated model has at least one layer")
}

/// Forward pass. For two layers: GCN gives `Â·φ(Â·X·W¹)·W²`, MLP `φ(X·W¹)·W²`.
pub fn forward(
    cfg: &ModelConfig,
    norm_adj: Option<&ArrayView2<'_, f64>>,
    features: &ArrayView2<'_, f64>,
    weights: &Weights,
    masks: Option<&DropoutMasks>,
) -> Result<PositionEstimate> {
    let cache = forward_cached(cfg, norm_adj, features, weights, masks)?;
    Ok(PositionEstimate {
        coords: cache.output,
    })
}

/// `‖R_l − R̂_l‖²_F` over the anchor rows.
pub fn anchor_loss(est: &PositionEstimate, scene: &Scene) -> f64 {
    let n_l = scene.n_anchors();
    let pred = est.coords.slice_axis(Axis(0), (..n_l).into());
    Zip::from(&pred)
        .and(&scene.anchor_positions())
        .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t))
}

/// `∂L/∂R̂`: twice the residual on anchor rows, zero elsewhere. Agent
/// coordinates are never read.
fn output_gradient(output: &Array2<f64>, scene: &Scene) -> Array2<f64> {
    let n_l = scene.n_anchors();
    let mut g = Array2::zeros(output.dim());
    Zip::from(g.slice_axis_mut(Axis(0), (..n_l).into()))
        .and(output.slice_axis(Axis(0), (..n_l).into()))
        .and(&scene.anchor_positions())
        .for_each(|g, &p, &t| *g = 2.0 * (p - t));
    g
}

pub(crate) fn backward_from_cache(
    cfg: &ModelConfig,
    norm_adj: Option<&ArrayView2<'_, f64>>,
    weights: &Weights,
    masks: Option<&DropoutMasks>,
    cache: &ForwardCache,
    scene: &Scene,
) -> Vec<Array2<f64>> {
    let k_layers = cfg.n_layers();
    let mut grads = vec![Array2::zeros((0, 0)); k_layers];
    let mut dz = output_gradient(&cache.output, scene);
    for k in (0..k_layers).rev() {
        grads[k] = cache.inputs[k].t().dot(&dz);
        if k == 0 {
            break;
        }
        let dp = dz.dot(&weights.layers[k].t());
        let mut dh = match norm_adj {
            Some(a) => a.t().dot(&dp),
            None => dp,
        };
        if let Some(m) = masks {
            dh *= &m.layers[k];
        }
        Zip::from(&mut dh)
            .and(&cache.pre_activations[k - 1])
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        dz = dh;
    }
    grads
}

/// Analytic `∂L/∂W^(k)` for every layer.
pub fn backward(
    cfg: &ModelConfig,
    norm_adj: Option<&ArrayView2<'_, f64>>,
    features: &ArrayView2<'_, f64>,
    weights: &Weights,
    masks: Option<&DropoutMasks>,
    scene: &Scene,
) -> Result<Vec<Array2<f64>>> {
    let cache = forward_cached(cfg, norm_adj, features, weights, masks)?;
    if cache.output.nrows() != scene.n_nodes() {
        return Err(Error::Shape {
            context: "backward scene",
            expected: (cache.output.nrows(), 2),
            actual: (scene.n_nodes(), 2),
        });
    }
    Ok(backward_from_cache(cfg, norm_adj, weights, masks, &cache, scene))
}

/// Agent-position error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    /// `‖R_u − R̂_u‖_F / √N_u`.
    pub rmse: f64,
    /// Unnormalized `‖R_u − R̂_u‖_F`.
    pub frobenius: f64,
}

pub fn agent_error(est: &PositionEstimate, scene: &Scene) -> RmseReport {
    let n_l = scene.n_anchors();
    let pred = est.coords.slice_axis(Axis(0), (n_l..).into());
    let sq = Zip::from(&pred)
        .and(&scene.agent_positions())
        .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t));
    let frobenius = sq.sqrt();
    RmseReport {
        rmse: frobenius / (scene.n_agents() as f64).sqrt(),
        frobenius,
    }
}

pub fn evaluate_rmse(est: &PositionEstimate, scene: &Scene) -> f64 {
    agent_error(est, scene).rmse
}
