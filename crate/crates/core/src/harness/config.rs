use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RowNorm;
use crate::model::{ModelKind, DEFAULT_DROPOUT};
use crate::scene::{NoiseParams, DEFAULT_AREA_SIDE, DEFAULT_NLOS_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NoiseTable,
    AnchorSweep,
    ThresholdSweep,
    SpectralReport,
    #[default]
    SingleRun,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::NoiseTable => "noise_table",
            Scenario::AnchorSweep => "anchor_sweep",
            Scenario::ThresholdSweep => "threshold_sweep",
            Scenario::SpectralReport => "spectral_report",
            Scenario::SingleRun => "single_run",
        }
    }
}

/// Flat key-value experiment description. Optional fields fall back to
/// scenario-specific defaults, see the `resolved_*` accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub n_anchors: Option<usize>,
    pub anchor_grid: Option<Vec<usize>>,
    pub area_side: f64,
    pub sigma_sq: Option<f64>,
    pub p_nlos: Option<f64>,
    pub noise_pairs: Option<Vec<(f64, f64)>>,
    pub nlos_max: f64,
    pub t_h: Option<f64>,
    pub threshold_grid: Option<Vec<f64>>,
    /// Append a threshold that connects every pair (`inf`) to sweeps.
    pub include_full_threshold: bool,
    pub models: Vec<ModelKind>,
    pub hidden: usize,
    pub dropout: f64,
    /// Row normalization of the network input (`l2` or `l1`).
    pub feature_norm: RowNorm,
    pub epochs: usize,
    pub learning_rate: f64,
    pub trials: usize,
    pub seed: u64,
    pub filter_order: u32,
}

pub const DEFAULT_THRESHOLD: f64 = 1.2;
pub const DEFAULT_SWEEP_HIDDEN: usize = 512;

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::default(),
            n: 500,
            n_anchors: None,
            anchor_grid: None,
            area_side: DEFAULT_AREA_SIDE,
            sigma_sq: None,
            p_nlos: None,
            noise_pairs: None,
            nlos_max: DEFAULT_NLOS_MAX,
            t_h: None,
            threshold_grid: None,
            include_full_threshold: true,
            models: vec![ModelKind::Gcn, ModelKind::Mlp],
            hidden: DEFAULT_SWEEP_HIDDEN,
            dropout: DEFAULT_DROPOUT,
            feature_norm: RowNorm::default(),
            epochs: 200,
            learning_rate: 0.01,
            trials: 5,
            seed: 0,
            filter_order: 2,
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        ExperimentConfig {
            scenario,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("trials must be >= 1"));
        }
        if self.models.is_empty() {
            return Err(Error::config("at least one model kind is required"));
        }
        if self.hidden < 1 || self.epochs < 1 {
            return Err(Error::config("hidden width and epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.filter_order < 1 {
            return Err(Error::config("filter order must be >= 1"));
        }
        if !(self.area_side > 0.0) {
            return Err(Error::config("area side must be positive"));
        }
        let anchors = self.resolved_anchor_grid();
        if anchors.is_empty() {
            return Err(Error::config("anchor grid is empty"));
        }
        if let Some(&bad) = anchors.iter().find(|&&a| a < 1 || a >= self.n) {
            return Err(Error::config(format!(
                "anchor count {bad} outside [1, {}]",
                self.n.saturating_sub(1)
            )));
        }
        let noise = self.resolved_noise_pairs();
        if noise.is_empty() {
            return Err(Error::config("noise list is empty"));
        }
        for &(s, p) in &noise {
            NoiseParams::with_nlos_max(s, p, self.nlos_max)?;
        }
        let grid = self.resolved_threshold_grid();
        if grid.is_empty() {
            return Err(Error::config("threshold grid is empty"));
        }
        if grid.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::config("thresholds must be positive"));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("threshold grid must be strictly ascending"));
        }
        Ok(())
    }

    pub fn noise(&self, pair: (f64, f64)) -> Result<NoiseParams> {
        NoiseParams::with_nlos_max(pair.0, pair.1, self.nlos_max)
    }

    /// Noise conditions: explicit list, else a single explicit pair, else
    /// the scenario default.
    pub fn resolved_noise_pairs(&self) -> Vec<(f64, f64)> {
        if let Some(pairs) = &self.noise_pairs {
            return pairs.clone();
        }
        if self.sigma_sq.is_some() || self.p_nlos.is_some() {
            return vec![(self.sigma_sq.unwrap_or(0.25), self.p_nlos.unwrap_or(0.3))];
        }
        match self.scenario {
            Scenario::NoiseTable => vec![
                (0.04, 0.0),
                (0.1, 0.1),
                (0.25, 0.1),
                (0.25, 0.3),
                (0.5, 0.5),
            ],
            Scenario::AnchorSweep => vec![(0.25, 0.1), (0.25, 0.3)],
            Scenario::ThresholdSweep => vec![(0.1, 0.1), (0.25, 0.3), (0.5, 0.5)],
            Scenario::SpectralReport => vec![(0.1, 0.0)],
            Scenario::SingleRun => vec![(0.25, 0.3)],
        }
    }

    pub fn resolved_anchor_grid(&self) -> Vec<usize> {
        match (&self.anchor_grid, self.n_anchors, self.scenario) {
            (Some(grid), _, _) => grid.clone(),
            (None, Some(a), _) => vec![a],
            (None, None, Scenario::AnchorSweep) => (1..=8).map(|k| 20 * k).collect(),
            (None, None, _) => vec![50],
        }
    }

    /// Finite thresholds; the fully-connecting value is added separately.
    pub fn resolved_threshold_grid(&self) -> Vec<f64> {
        match (&self.threshold_grid, self.t_h, self.scenario) {
            (Some(grid), _, _) => grid.clone(),
            (None, Some(t), _) => vec![t],
            // 0.2, 0.4, ..., 4.0 without accumulated rounding
            (None, None, Scenario::ThresholdSweep) => (1..=20).map(|k| k as f64 / 5.0).collect(),
            (None, None, _) => vec![DEFAULT_THRESHOLD],
        }
    }

    pub fn sweep_thresholds(&self) -> Vec<f64> {
        let mut grid = self.resolved_threshold_grid();
        if self.scenario == Scenario::ThresholdSweep && self.include_full_threshold {
            grid.push(f64::INFINITY);
        }
        grid
    }

    pub fn threshold(&self) -> f64 {
        self.t_h.unwrap_or(DEFAULT_THRESHOLD)
    }

    pub fn n_anchors(&self) -> usize {
        self.n_anchors.unwrap_or(50)
    }

    /// Seed of trial `index`; every cell of that trial shares the scene.
    pub fn trial_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}
