//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs in release-level optimization (see the workspace profile);
//! the training-heavy checks take roughly a quarter of an hour on one core.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use gcnloc::graph::{propagate, propagate_decomposed, ThresholdedGraph};
use gcnloc::harness::{
    run_cell, run_noise_table, run_threshold_sweep, spectral_report, CellConfig,
    ExperimentConfig, ExperimentResult, Scenario,
};
use gcnloc::model::ModelKind;
use gcnloc::rng::seeded;
use gcnloc::scene::{generate_scene, measure_distances, true_distances, DistanceMatrix, NoiseParams};
use gcnloc::spectral::{
    eigendecompose, filter_response, laplacian, SIGNAL_LOS_NOISE, SIGNAL_TRUE_DISTANCE,
};
use ndarray::{Array1, Array2};
use rand::Rng;

const N: usize = 500;
const N_ANCHORS: usize = 50;
const T_H: f64 = 1.2;
const WIDTH: usize = 512;
const SEEDS: usize = 5;

#[derive(Default)]
struct Report {
    lines: Vec<(u32, bool, String)>,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        let text = format!("[{}] {id}. {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{text}");
        self.lines.push((id, pass, text));
    }

    fn summary(&mut self) -> usize {
        self.lines.sort_by_key(|l| l.0);
        println!("\nacceptance summary");
        for (_, _, text) in &self.lines {
            println!("{text}");
        }
        let failures = self.lines.iter().filter(|l| !l.1).count();
        println!("acceptance: {} criteria, {failures} failure(s)", self.lines.len());
        failures
    }
}

fn gradient_oracle(r: &mut Report) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in 0..24u64 {
        let kind = if seed % 2 == 0 { ModelKind::Gcn } else { ModelKind::Mlp };
        let n = 3 + (seed as usize % 6);
        let hidden = 1 + (seed as usize % 4);
        let inst = common::instance(kind, n, hidden, 1000 + seed);
        worst = worst.max(common::max_relative_error(&inst));
        count += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    r.line(
        1,
        "gradient oracle",
        count >= 20 && worst < 1e-4 && secs < 10.0,
        format!("{count} instances, max relative error {worst:.2e} (< 1e-4), {secs:.2}s (< 10s)"),
    );
}

fn random_distances(n: usize, rng: &mut impl Rng) -> DistanceMatrix {
    let mut x = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.0..3.0);
            x[[i, j]] = v;
            x[[j, i]] = v;
        }
    }
    DistanceMatrix::new(x).unwrap()
}

fn propagation_oracle(r: &mut Report) {
    let mut rng = seeded(2);
    let mut worst: f64 = 0.0;
    let graphs = 120;
    for _ in 0..graphs {
        let n = rng.random_range(1..=50);
        let t_h = rng.random_range(0.1..3.0);
        let g = ThresholdedGraph::build(&random_distances(n, &mut rng), t_h).unwrap();
        let width = rng.random_range(1..6);
        let h = Array2::from_shape_simple_fn((n, width), || rng.random_range(-2.0..2.0));
        let a = propagate(&g.norm_adjacency(), &h.view()).unwrap();
        let b = propagate_decomposed(&g.adjacency(), &g.degrees().view(), &h.view()).unwrap();
        worst = worst.max((&a - &b).iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    r.line(
        2,
        "propagation oracle",
        worst <= 1e-12,
        format!("{graphs} graphs (N <= 50), max deviation {worst:.2e} (<= 1e-12)"),
    );
}

fn noise_truncation(r: &mut Report) {
    let mut rng = seeded(3);
    let scene = generate_scene(N, N_ANCHORS, 5.0, &mut rng).unwrap();
    let measured = measure_distances(&scene, &NoiseParams::new(0.25, 0.3).unwrap(), &mut rng).unwrap();
    let truth = true_distances(&scene);
    let g = ThresholdedGraph::build(&measured, T_H).unwrap();
    let (mut retained, mut violations, mut mismatched) = (0usize, 0usize, 0usize);
    for i in 0..N {
        for j in 0..N {
            if i == j {
                continue;
            }
            let kept = g.adjacency()[[i, j]] == 1.0;
            if kept != (measured.get(i, j) <= T_H) {
                mismatched += 1;
            }
            if kept {
                retained += 1;
                let d = truth.get(i, j);
                let noise = measured.get(i, j) - d;
                if noise > T_H - d {
                    violations += 1;
                }
            }
        }
    }
    r.line(
        3,
        "noise truncation",
        violations == 0 && mismatched == 0 && retained > 0,
        format!("{retained} retained entries, {violations} violations, {mismatched} edge mismatches"),
    );
}

fn mean_rmse(result: &ExperimentResult, kind: ModelKind, sigma_sq: f64, p_nlos: f64, t_h: f64) -> f64 {
    result
        .find(kind, sigma_sq, p_nlos, N_ANCHORS, t_h)
        .map(|row| row.rmse_mean)
        .unwrap_or(f64::NAN)
}

fn accuracy_and_robustness(r: &mut Report) -> ExperimentResult {
    let cfg = ExperimentConfig {
        n: N,
        n_anchors: Some(N_ANCHORS),
        t_h: Some(T_H),
        hidden: WIDTH,
        trials: SEEDS,
        noise_pairs: Some(vec![(0.25, 0.3), (0.25, 0.1)]),
        ..ExperimentConfig::for_scenario(Scenario::NoiseTable)
    };
    let start = Instant::now();
    let mut hard_secs = 0.0;
    let result = run_noise_table(&cfg, |rec| {
        if rec.cell.noise.p_nlos == 0.3 {
            hard_secs += rec.seconds;
        }
        eprintln!(
            "  {} p_B={} seed={} rmse={:.4} ({:.1}s)",
            rec.cell.kind, rec.cell.noise.p_nlos, rec.seed, rec.rmse, rec.seconds
        );
    })
    .unwrap();
    let total = start.elapsed().as_secs_f64();

    let gcn = mean_rmse(&result, ModelKind::Gcn, 0.25, 0.3, T_H);
    let mlp = mean_rmse(&result, ModelKind::Mlp, 0.25, 0.3, T_H);
    r.line(
        4,
        "relative accuracy",
        gcn <= 0.7 * mlp && hard_secs < 900.0,
        format!(
            "GCN {gcn:.4} vs MLP {mlp:.4} (ratio {:.3}, <= 0.7) at (0.25, 30%), {SEEDS} seeds, width {WIDTH}, {hard_secs:.0}s (< 900s)",
            gcn / mlp
        ),
    );

    let gcn_lo = mean_rmse(&result, ModelKind::Gcn, 0.25, 0.1, T_H);
    let mlp_lo = mean_rmse(&result, ModelKind::Mlp, 0.25, 0.1, T_H);
    let (gcn_ratio, mlp_ratio) = (gcn / gcn_lo, mlp / mlp_lo);
    r.line(
        6,
        "robustness trend",
        mlp_ratio > gcn_ratio,
        format!(
            "p_B 10% -> 30%: MLP x{mlp_ratio:.3} ({mlp_lo:.4} -> {mlp:.4}), GCN x{gcn_ratio:.3} ({gcn_lo:.4} -> {gcn:.4}); {total:.0}s total"
        ),
    );
    result
}

fn threshold_sweep(r: &mut Report, table: &ExperimentResult) {
    let plateau = [1.0, 1.2, 1.6, 2.0, 2.4, 2.8];
    let mut grid = vec![0.2];
    grid.extend(plateau.iter().filter(|&&t| t != T_H));
    let cfg = ExperimentConfig {
        n: N,
        n_anchors: Some(N_ANCHORS),
        hidden: WIDTH,
        trials: SEEDS,
        noise_pairs: Some(vec![(0.25, 0.3)]),
        threshold_grid: Some(grid),
        include_full_threshold: true,
        ..ExperimentConfig::for_scenario(Scenario::ThresholdSweep)
    };
    let sweep = run_threshold_sweep(&cfg, |rec| {
        eprintln!("  T_h={} seed={} rmse={:.4} spread={:.4}", rec.cell.t_h, rec.seed, rec.rmse, rec.spread_ratio);
    })
    .unwrap();
    // T_h = 1.2 reuses the accuracy table: same seeds, hence the same scenes.
    let at = |t: f64| -> f64 {
        if t == T_H {
            let rows: Vec<f64> = table
                .trials
                .iter()
                .filter(|rec| rec.cell.kind == ModelKind::Gcn && rec.cell.noise.p_nlos == 0.3)
                .map(|rec| rec.rmse)
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        } else {
            mean_rmse(&sweep, ModelKind::Gcn, 0.25, 0.3, t)
        }
    };
    let low = at(0.2);
    let mid = at(T_H);
    let values: Vec<f64> = plateau.iter().map(|&t| at(t)).collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let variation = (hi - lo) / lo;
    let full = sweep
        .find(ModelKind::Gcn, 0.25, 0.3, N_ANCHORS, f64::INFINITY)
        .map(|row| row.spread_ratio_mean)
        .unwrap_or(f64::NAN);
    let curve: Vec<String> = plateau.iter().zip(&values).map(|(t, v)| format!("{t}:{v:.3}")).collect();
    r.line(
        5,
        "threshold sweep shape",
        low > 2.0 * mid && variation < 0.5 && full < 0.1,
        format!(
            "RMSE(0.2) {low:.3} vs 2 x RMSE(1.2) {:.3}; plateau [{}] varies {:.1}% (< 50%); full-connection spread ratio {full:.2e} (< 0.1); {SEEDS} seeds at (0.25, 30%)",
            2.0 * mid,
            curve.join(" "),
            100.0 * variation
        ),
    );
}

fn spectral_properties(r: &mut Report) {
    let cfg = ExperimentConfig {
        n: N,
        n_anchors: Some(N_ANCHORS),
        t_h: Some(T_H),
        ..ExperimentConfig::for_scenario(Scenario::SpectralReport)
    };
    let report = spectral_report(&cfg).unwrap();
    let lambda = &report.eigenvalues;
    let eig_ok = lambda.iter().all(|&l| l >= -1e-9 && l < 2.0 + 1e-9 && l < 2.0);
    let (lmin, lmax) = lambda.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &l| (a.min(l), b.max(l)));

    // Independent reconstruction of the same graph for the round-trip checks.
    let (scene, measured) = {
        let seed = cfg.trial_seed(0);
        let noise = cfg.noise(cfg.resolved_noise_pairs()[0]).unwrap();
        gcnloc::harness::build_instance(N, N_ANCHORS, cfg.area_side, &noise, seed).unwrap()
    };
    let g = ThresholdedGraph::build(&measured, T_H).unwrap();
    let norm_adj = g.norm_adjacency();
    let decomp = eigendecompose(&laplacian(&norm_adj).unwrap().view()).unwrap();
    let signal = true_distances(&scene).into_inner();
    let back = decomp.inverse_gft(&decomp.gft(&signal.view()).unwrap().view()).unwrap();
    let roundtrip = (&back - &signal).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let k = cfg.filter_order;
    let mut direct = signal.clone();
    for _ in 0..k {
        direct = norm_adj.dot(&direct);
    }
    let response: Array1<f64> = filter_response(&decomp.eigenvalues.view(), k).unwrap();
    let mut coeffs = decomp.gft(&signal.view()).unwrap();
    for (mut row, g) in coeffs.rows_mut().into_iter().zip(response.iter()) {
        row *= *g;
    }
    let spectral = decomp.inverse_gft(&coeffs.view()).unwrap();
    let commutation = (&direct - &spectral).iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let truth = report.signal(SIGNAL_TRUE_DISTANCE).unwrap().low_band_fraction(0.25);
    let noise = report.signal(SIGNAL_LOS_NOISE).unwrap().low_band_fraction(0.25);
    let concentration = truth / noise;
    r.line(
        7,
        "spectral properties",
        eig_ok && roundtrip < 1e-8 && commutation < 1e-7 && concentration >= 2.0,
        format!(
            "eigenvalues in [{lmin:.2e}, {lmax:.6}]; GFT round trip {roundtrip:.2e} (< 1e-8); filter commutation {commutation:.2e} (< 1e-7); low-band energy {truth:.3} vs {noise:.3}, ratio {concentration:.2} (>= 2)"
        ),
    );
}

fn determinism(r: &mut Report, table: &ExperimentResult) {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for kind in [ModelKind::Mlp, ModelKind::Gcn] {
        let rec = table
            .trials
            .iter()
            .find(|rec| rec.cell.kind == kind && rec.trial == SEEDS - 1)
            .unwrap();
        let again = run_cell(&rec.cell).unwrap();
        checked += 1;
        if again.rmse.to_bits() != rec.rmse.to_bits() || rec.cell.hash() != rec.config_hash {
            mismatches.push(format!("{kind}: {} vs {}", rec.rmse, again.rmse));
        }
    }
    r.line(
        8,
        "determinism",
        mismatches.is_empty(),
        format!("{checked} recorded cells re-run, {} bitwise mismatches {mismatches:?}", mismatches.len()),
    );
}

fn wall_clock(r: &mut Report) {
    let cell = CellConfig {
        n: N,
        n_anchors: N_ANCHORS,
        area_side: 5.0,
        noise: NoiseParams::new(0.25, 0.3).unwrap(),
        t_h: T_H,
        kind: ModelKind::Gcn,
        hidden: 2000,
        dropout: 0.5,
        epochs: 200,
        learning_rate: 0.01,
        seed: 0,
        feature_norm: Default::default(),
    };
    let out = run_cell(&cell).unwrap();
    r.line(
        9,
        "wall-clock sanity",
        out.seconds < 600.0 && out.training.loss_history.len() == 200,
        format!("200 epochs at width 2000 in {:.1}s (< 600s), RMSE {:.4}", out.seconds, out.rmse),
    );
}

fn main() -> ExitCode {
    // libtest-style filtering arguments are ignored; `--list` must print nothing.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut r = Report::default();
    gradient_oracle(&mut r);
    propagation_oracle(&mut r);
    noise_truncation(&mut r);
    let table = accuracy_and_robustness(&mut r);
    threshold_sweep(&mut r, &table);
    spectral_properties(&mut r);
    determinism(&mut r, &table);
    wall_clock(&mut r);
    if r.summary() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
