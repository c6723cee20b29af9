use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gcnloc::graph::{RowNorm, ThresholdedGraph};
use gcnloc::harness::{
    self, ExperimentConfig, ExperimentResult, Scenario, TrialRecord, DEFAULT_THRESHOLD,
};
use gcnloc::model::{self, Checkpoint, ModelConfig, ModelKind, TrainConfig, DEFAULT_HIDDEN};
use gcnloc::rng::{self, Stream};
use gcnloc::scene::{generate_scene, measure_distances, NoiseParams, SceneDocument};

#[derive(Parser)]
#[command(name = "gcnloc", version, about = "GCN network localization simulator and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scene with noisy range measurements as JSON.
    Generate(GenerateArgs),
    /// Train a model on a scene JSON; write checkpoint and metrics.
    Train(TrainArgs),
    /// Accuracy of GCN and MLP under several noise conditions.
    NoiseTable(SweepArgs),
    /// Accuracy versus number of anchors.
    AnchorSweep(SweepArgs),
    /// GCN accuracy versus neighbour threshold.
    ThresholdSweep(SweepArgs),
    /// Graph-spectral profile of distance and noise signals.
    Spectral(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    anchors: usize,
    #[arg(long, default_value_t = 5.0)]
    side: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma_sq: f64,
    #[arg(long, default_value_t = 0.3)]
    p_nlos: f64,
    #[arg(long, default_value_t = 10.0)]
    nlos_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Scene JSON produced by `generate`.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "gcn")]
    model: ModelKind,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    t_h: f64,
    #[arg(long, default_value_t = model::DEFAULT_DROPOUT)]
    dropout: f64,
    /// Row normalization of the input features: l2 or l1.
    #[arg(long, default_value = "l2")]
    feature_norm: RowNorm,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    metrics: PathBuf,
    /// Optional per-epoch loss CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Flat key-value TOML config; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Summary CSV path.
    #[arg(short, long)]
    out: PathBuf,
    /// Per-trial CSV path (not used by `spectral`).
    #[arg(long)]
    trials_out: Option<PathBuf>,
    #[arg(short, long)]
    quiet: bool,
}

fn load_config(path: Option<&Path>, scenario: Scenario) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.scenario = scenario;
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let noise = NoiseParams::with_nlos_max(args.sigma_sq, args.p_nlos, args.nlos_max)?;
    let mut rng = rng::stream(args.seed, Stream::Scene);
    let scene = generate_scene(args.n, args.anchors, args.side, &mut rng)?;
    let measured = measure_distances(&scene, &noise, &mut rng)?;
    let json = SceneDocument::new(&scene, &measured, noise, Some(args.seed)).to_json()?;
    match args.out {
        Some(p) => fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct TrainMetrics {
    model: ModelKind,
    n: usize,
    n_anchors: usize,
    t_h: f64,
    rmse: f64,
    frobenius: f64,
    final_loss: f64,
    seconds: f64,
    edges: usize,
    isolated_nodes: usize,
}

fn train(args: TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scene)
        .with_context(|| format!("reading {}", args.scene.display()))?;
    let (scene, measured) = SceneDocument::from_json(&text)?.into_parts()?;
    let graph = ThresholdedGraph::build(&measured, args.t_h)?;
    let model_cfg = ModelConfig::two_layer(args.model, scene.n_nodes(), args.hidden, args.dropout)?
        .with_feature_norm(args.feature_norm);
    let train_cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (outcome, timing) = harness::time_run("train", || model::train(&model_cfg, &train_cfg, &graph, &scene));
    let outcome = outcome?;
    let estimate = model::predict(&model_cfg, &graph, &outcome.weights)?;
    let err = model::agent_error(&estimate, &scene);
    let metrics = TrainMetrics {
        model: args.model,
        n: scene.n_nodes(),
        n_anchors: scene.n_anchors(),
        t_h: args.t_h,
        rmse: err.rmse,
        frobenius: err.frobenius,
        final_loss: outcome.final_loss(),
        seconds: timing.seconds,
        edges: graph.edge_count(),
        isolated_nodes: graph.isolated_nodes(),
    };
    if let Some(p) = &args.loss_csv {
        outcome.write_loss_csv(create(p)?)?;
    }
    let ckpt = Checkpoint {
        model: model_cfg,
        train: train_cfg,
        threshold: args.t_h,
        weights: outcome.weights,
    };
    fs::write(&args.checkpoint, ckpt.to_json()?)
        .with_context(|| format!("writing {}", args.checkpoint.display()))?;
    fs::write(&args.metrics, serde_json::to_string_pretty(&metrics)?)
        .with_context(|| format!("writing {}", args.metrics.display()))?;
    println!("{} rmse={:.4} seconds={:.2}", args.model, err.rmse, timing.seconds);
    Ok(())
}

fn sweep(
    args: SweepArgs,
    scenario: Scenario,
    run: fn(&ExperimentConfig, &mut dyn FnMut(&TrialRecord)) -> gcnloc::Result<ExperimentResult>,
) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), scenario)?;
    let quiet = args.quiet;
    let mut progress = |r: &TrialRecord| {
        if !quiet {
            eprintln!(
                "{} sigma_sq={} p_nlos={} n_anchors={} t_h={} trial={} rmse={:.4} ({:.1}s)",
                r.cell.kind,
                r.cell.noise.sigma_sq,
                r.cell.noise.p_nlos,
                r.cell.n_anchors,
                r.cell.t_h,
                r.trial,
                r.rmse,
                r.seconds
            );
        }
    };
    let result = run(&cfg, &mut progress)?;
    result.write_summary_csv(create(&args.out)?)?;
    if let Some(p) = &args.trials_out {
        result.write_trials_csv(create(p)?)?;
    }
    Ok(())
}

fn spectral(args: SweepArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), Scenario::SpectralReport)?;
    harness::run_spectral_report(&cfg, create(&args.out)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::NoiseTable(a) => sweep(a, Scenario::NoiseTable, |c, p| harness::run_noise_table(c, p)),
        Command::AnchorSweep(a) => sweep(a, Scenario::AnchorSweep, |c, p| harness::run_anchor_sweep(c, p)),
        Command::ThresholdSweep(a) => {
            sweep(a, Scenario::ThresholdSweep, |c, p| harness::run_threshold_sweep(c, p))
        }
        Command::Spectral(a) => spectral(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
