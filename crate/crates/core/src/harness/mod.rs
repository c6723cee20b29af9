//! Reproducible experiment runner.
//!
//! Every training run is described by a self-contained [`CellConfig`]; its
//! hash and seed travel with the result so any row can be re-run in
//! isolation and reproduce its RMSE bit for bit.

mod config;
mod results;

pub use config::{ExperimentConfig, Scenario, DEFAULT_SWEEP_HIDDEN, DEFAULT_THRESHOLD};
pub use results::{ExperimentResult, SummaryRow, TrialRecord};

use std::io::Write;
use std::time::Instant;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::graph::{RowNorm, ThresholdedGraph};
use crate::model::{
    agent_error, predict, train, ModelConfig, ModelKind, PositionEstimate, TrainConfig,
    TrainOutcome,
};
use crate::rng::{self, Stream};
use crate::scene::{generate_scene, measure_distances, DistanceMatrix, NoiseParams, Scene};
use crate::spectral::{spectral_energy_report, SpectralReport};

/// Wall-clock duration of one labelled piece of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

pub fn time_run<T>(label: &str, thunk: impl FnOnce() -> T) -> (T, Timing) {
    let start = Instant::now();
    let out = thunk();
    let seconds = start.elapsed().as_secs_f64();
    (
        out,
        Timing {
            label: label.to_string(),
            seconds,
        },
    )
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub n: usize,
    pub n_anchors: usize,
    pub area_side: f64,
    pub noise: NoiseParams,
    /// `inf` connects every pair.
    pub t_h: f64,
    pub kind: ModelKind,
    pub hidden: usize,
    pub dropout: f64,
    #[serde(default)]
    pub feature_norm: RowNorm,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl CellConfig {
    /// First 16 hex digits of the SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("cell config serializes");
        short_hash(json.as_bytes())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig::two_layer(self.kind, self.n, self.hidden, self.dropout)?
            .with_feature_norm(self.feature_norm))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// Scene and measurements; depends only on geometry, noise and seed.
    pub fn instance(&self) -> Result<(Scene, DistanceMatrix)> {
        build_instance(self.n, self.n_anchors, self.area_side, &self.noise, self.seed)
    }
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn build_instance(
    n: usize,
    n_anchors: usize,
    area_side: f64,
    noise: &NoiseParams,
    seed: u64,
) -> Result<(Scene, DistanceMatrix)> {
    let mut rng = rng::stream(seed, Stream::Scene);
    let scene = generate_scene(n, n_anchors, area_side, &mut rng)?;
    let measured = measure_distances(&scene, noise, &mut rng)?;
    Ok((scene, measured))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub rmse: f64,
    pub frobenius: f64,
    /// Spread of predicted agent positions relative to the true spread.
    pub spread_ratio: f64,
    pub final_loss: f64,
    pub seconds: f64,
    pub estimate: PositionEstimate,
    pub training: TrainOutcome,
}

/// Pooled per-coordinate standard deviation of a point set.
pub fn position_spread(points: &ArrayView2<'_, f64>) -> f64 {
    let var = points.var_axis(Axis(0), 0.0);
    var.mean().unwrap_or(0.0).sqrt()
}

pub fn prediction_spread_ratio(est: &PositionEstimate, scene: &Scene) -> f64 {
    let pred = est.coords.slice_axis(Axis(0), (scene.n_anchors()..).into());
    let truth = position_spread(&scene.agent_positions());
    if truth > 0.0 {
        position_spread(&pred) / truth
    } else {
        0.0
    }
}

pub fn run_cell_on(cell: &CellConfig, scene: &Scene, measured: &DistanceMatrix) -> Result<CellOutcome> {
    let model = cell.model_config()?;
    let (result, timing) = time_run("train", || -> Result<_> {
        let graph = ThresholdedGraph::build(measured, cell.t_h)?;
        let training = train(&model, &cell.train_config(), &graph, scene)?;
        let estimate = predict(&model, &graph, &training.weights)?;
        Ok((training, estimate))
    });
    let (training, estimate) = result?;
    let err = agent_error(&estimate, scene);
    Ok(CellOutcome {
        rmse: err.rmse,
        frobenius: err.frobenius,
        spread_ratio: prediction_spread_ratio(&estimate, scene),
        final_loss: training.final_loss(),
        seconds: timing.seconds,
        estimate,
        training,
    })
}

pub fn run_cell(cell: &CellConfig) -> Result<CellOutcome> {
    let (scene, measured) = cell.instance()?;
    run_cell_on(cell, &scene, &measured)
}

fn cell(cfg: &ExperimentConfig, n_anchors: usize, noise: NoiseParams, t_h: f64, kind: ModelKind, seed: u64) -> CellConfig {
    CellConfig {
        n: cfg.n,
        n_anchors,
        area_side: cfg.area_side,
        noise,
        t_h,
        kind,
        hidden: cfg.hidden,
        dropout: cfg.dropout,
        feature_norm: cfg.feature_norm,
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        seed,
    }
}

/// Runs every (noise, anchors, threshold, model, trial) cell. Cells of one
/// trial share the scene and measurements.
fn run_grid(
    cfg: &ExperimentConfig,
    scenario: Scenario,
    anchors: &[usize],
    thresholds: &[f64],
    models: &[ModelKind],
    mut progress: impl FnMut(&TrialRecord),
) -> Result<ExperimentResult> {
    let cfg = ExperimentConfig {
        scenario,
        ..cfg.clone()
    };
    cfg.validate()?;
    let mut records = Vec::new();
    for pair in cfg.resolved_noise_pairs() {
        let noise = cfg.noise(pair)?;
        for &n_anchors in anchors {
            for trial in 0..cfg.trials {
                let seed = cfg.trial_seed(trial);
                let (scene, measured) = build_instance(cfg.n, n_anchors, cfg.area_side, &noise, seed)?;
                for &t_h in thresholds {
                    for &kind in models {
                        let c = cell(&cfg, n_anchors, noise, t_h, kind, seed);
                        let out = run_cell_on(&c, &scene, &measured)?;
                        let record = TrialRecord::new(scenario, trial, c, &out);
                        progress(&record);
                        records.push(record);
                    }
                }
            }
        }
    }
    Ok(ExperimentResult::from_records(&cfg, records))
}

pub fn run_noise_table(cfg: &ExperimentConfig, progress: impl FnMut(&TrialRecord)) -> Result<ExperimentResult> {
    run_grid(
        cfg,
        Scenario::NoiseTable,
        &[cfg.n_anchors()],
        &[cfg.threshold()],
        &cfg.models,
        progress,
    )
}

pub fn run_anchor_sweep(cfg: &ExperimentConfig, progress: impl FnMut(&TrialRecord)) -> Result<ExperimentResult> {
    let cfg = ExperimentConfig {
        scenario: Scenario::AnchorSweep,
        ..cfg.clone()
    };
    run_grid(
        &cfg,
        Scenario::AnchorSweep,
        &cfg.resolved_anchor_grid(),
        &[cfg.threshold()],
        &cfg.models,
        progress,
    )
}

/// GCN only, unless `models` is set to something else explicitly.
pub fn run_threshold_sweep(cfg: &ExperimentConfig, progress: impl FnMut(&TrialRecord)) -> Result<ExperimentResult> {
    let cfg = ExperimentConfig {
        scenario: Scenario::ThresholdSweep,
        ..cfg.clone()
    };
    let default_models = ExperimentConfig::default().models;
    let models = if cfg.models == default_models {
        vec![ModelKind::Gcn]
    } else {
        cfg.models.clone()
    };
    run_grid(
        &cfg,
        Scenario::ThresholdSweep,
        &[cfg.n_anchors()],
        &cfg.sweep_thresholds(),
        &models,
        progress,
    )
}

pub fn run_single(cfg: &ExperimentConfig, progress: impl FnMut(&TrialRecord)) -> Result<ExperimentResult> {
    run_grid(
        cfg,
        Scenario::SingleRun,
        &[cfg.n_anchors()],
        &[cfg.threshold()],
        &cfg.models,
        progress,
    )
}

/// Spectral profile of the first noise condition on the scene of trial 0.
pub fn spectral_report(cfg: &ExperimentConfig) -> Result<SpectralReport> {
    let cfg = ExperimentConfig {
        scenario: Scenario::SpectralReport,
        ..cfg.clone()
    };
    cfg.validate()?;
    let pair = cfg.resolved_noise_pairs()[0];
    let noise = cfg.noise(pair)?;
    let seed = cfg.trial_seed(0);
    let (scene, measured) = build_instance(cfg.n, cfg.n_anchors(), cfg.area_side, &noise, seed)?;
    let graph = ThresholdedGraph::build(&measured, cfg.threshold())?;
    let mut rng = rng::stream(seed, Stream::Spectral);
    spectral_energy_report(&graph, &scene, &noise, cfg.filter_order, &mut rng)
}

pub fn run_spectral_report<W: Write>(cfg: &ExperimentConfig, out: W) -> Result<SpectralReport> {
    let report = spectral_report(cfg)?;
    report.write_csv(out)?;
    Ok(report)
}
