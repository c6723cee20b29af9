use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::{short_hash, CellConfig, CellOutcome};
use crate::error::Result;
use crate::model::ModelKind;

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: Scenario,
    pub trial: usize,
    pub seed: u64,
    pub config_hash: String,
    pub rmse: f64,
    pub frobenius: f64,
    pub spread_ratio: f64,
    pub final_loss: f64,
    pub seconds: f64,
    pub cell: CellConfig,
}

impl TrialRecord {
    pub fn new(scenario: Scenario, trial: usize, cell: CellConfig, out: &CellOutcome) -> Self {
        TrialRecord {
            scenario,
            trial,
            seed: cell.seed,
            config_hash: cell.hash(),
            rmse: out.rmse,
            frobenius: out.frobenius,
            spread_ratio: out.spread_ratio,
            final_loss: out.final_loss,
            seconds: out.seconds,
            cell,
        }
    }

    fn group_key(&self) -> (u64, u64, usize, u64, ModelKind) {
        (
            ordered(self.cell.noise.sigma_sq),
            ordered(self.cell.noise.p_nlos),
            self.cell.n_anchors,
            ordered(self.cell.t_h),
            self.cell.kind,
        )
    }

    fn key(&self) -> ((u64, u64, usize, u64, ModelKind), usize) {
        (self.group_key(), self.trial)
    }
}

// Order-preserving bit pattern for nonnegative floats (including inf).
fn ordered(v: f64) -> u64 {
    v.to_bits()
}

/// Mean ± std over the trials of one cell coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub n: usize,
    pub n_anchors: usize,
    pub sigma_sq: f64,
    pub p_nlos: f64,
    pub t_h: f64,
    pub model: ModelKind,
    pub trials: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub spread_ratio_mean: f64,
    pub seconds_mean: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: Scenario,
    /// Hash of the experiment configuration that produced these rows.
    pub config_hash: String,
    pub summary: Vec<SummaryRow>,
    pub trials: Vec<TrialRecord>,
}

pub const SUMMARY_HEADER: [&str; 14] = [
    "scenario",
    "n",
    "n_anchors",
    "sigma_sq",
    "p_nlos",
    "t_h",
    "model",
    "trials",
    "rmse_mean",
    "rmse_std",
    "spread_ratio_mean",
    "seconds_mean",
    "seed",
    "config_hash",
];

pub const TRIALS_HEADER: [&str; 15] = [
    "scenario",
    "n",
    "n_anchors",
    "sigma_sq",
    "p_nlos",
    "t_h",
    "model",
    "trial",
    "seed",
    "config_hash",
    "rmse",
    "frobenius",
    "spread_ratio",
    "final_loss",
    "seconds",
];

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ExperimentResult {
    pub fn from_records(cfg: &ExperimentConfig, mut records: Vec<TrialRecord>) -> Self {
        records.sort_by_key(|r| r.key());
        let config_hash = short_hash(cfg.to_toml().as_bytes());
        let mut summary = Vec::new();
        let mut start = 0;
        while start < records.len() {
            let head = &records[start];
            let group_key = head.group_key();
            let end = start
                + records[start..]
                    .iter()
                    .take_while(|r| r.group_key() == group_key)
                    .count();
            let group = &records[start..end];
            let rmse: Vec<f64> = group.iter().map(|r| r.rmse).collect();
            let (rmse_mean, rmse_std) = mean_std(&rmse);
            let spread: Vec<f64> = group.iter().map(|r| r.spread_ratio).collect();
            let secs: Vec<f64> = group.iter().map(|r| r.seconds).collect();
            summary.push(SummaryRow {
                scenario: cfg.scenario,
                n: head.cell.n,
                n_anchors: head.cell.n_anchors,
                sigma_sq: head.cell.noise.sigma_sq,
                p_nlos: head.cell.noise.p_nlos,
                t_h: head.cell.t_h,
                model: head.cell.kind,
                trials: group.len(),
                rmse_mean,
                rmse_std,
                spread_ratio_mean: mean_std(&spread).0,
                seconds_mean: mean_std(&secs).0,
                seed: cfg.seed,
                config_hash: config_hash.clone(),
            });
            start = end;
        }
        ExperimentResult {
            scenario: cfg.scenario,
            config_hash,
            summary,
            trials: records,
        }
    }

    /// Summary row matching the given coordinates.
    pub fn find(
        &self,
        model: ModelKind,
        sigma_sq: f64,
        p_nlos: f64,
        n_anchors: usize,
        t_h: f64,
    ) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.model == model
                && r.sigma_sq == sigma_sq
                && r.p_nlos == p_nlos
                && r.n_anchors == n_anchors
                && r.t_h == t_h
        })
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SUMMARY_HEADER)?;
        for r in &self.summary {
            w.write_record([
                r.scenario.as_str().to_string(),
                r.n.to_string(),
                r.n_anchors.to_string(),
                r.sigma_sq.to_string(),
                r.p_nlos.to_string(),
                r.t_h.to_string(),
                r.model.to_string(),
                r.trials.to_string(),
                r.rmse_mean.to_string(),
                r.rmse_std.to_string(),
                r.spread_ratio_mean.to_string(),
                r.seconds_mean.to_string(),
                r.seed.to_string(),
                r.config_hash.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trials_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRIALS_HEADER)?;
        for r in &self.trials {
            w.write_record([
                r.scenario.as_str().to_string(),
                r.cell.n.to_string(),
                r.cell.n_anchors.to_string(),
                r.cell.noise.sigma_sq.to_string(),
                r.cell.noise.p_nlos.to_string(),
                r.cell.t_h.to_string(),
                r.cell.kind.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.config_hash.clone(),
                r.rmse.to_string(),
                r.frobenius.to_string(),
                r.spread_ratio.to_string(),
                r.final_loss.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
