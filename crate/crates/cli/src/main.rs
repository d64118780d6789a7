use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dual_core::baselines::Strategy;
use dual_core::data::{load_csv, make_blobs, random_centers, write_csv, Dataset, LabelColumn};
use dual_core::dual::TrainConfig;
use dual_core::experiment::{
    emit_outputs, indices_csv, joint_history_csv, pretrain_history_csv, ranking_csv, run_experiment,
    select_from_pool, write_atomic, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "dual", version, about = "Unsupervised sample selection with DUAL and baselines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank a whole dataset and write the first `budget` indices.
    Select(SelectArgs),
    /// Run the repeated split / select / SVM protocol from a JSON config.
    Experiment(ExperimentArgs),
    /// Write a labelled Gaussian-blob CSV.
    GenSynth(SynthArgs),
}

#[derive(Args)]
struct SelectArgs {
    /// Experiment-style JSON config; its dataset and `train` block are used.
    #[arg(long, conflicts_with = "data")]
    config: Option<PathBuf>,
    /// CSV to select from, when no config is given.
    #[arg(long, required_unless_present = "config")]
    data: Option<PathBuf>,
    /// Label column name or zero-based index. It is never used for selection.
    #[arg(long, default_value = "label")]
    label_column: LabelColumn,
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value = "dual")]
    strategy: Strategy,
    /// Number of samples to select.
    #[arg(long)]
    budget: usize,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "selection")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to `out_dir` in the config, then `results`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Replaces the configured strategies (repeatable).
    #[arg(long)]
    strategy: Vec<Strategy>,
    /// Replaces the configured budgets (repeatable).
    #[arg(long)]
    budget: Vec<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Samples per cluster, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,100,100")]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Centers are uniform in `[-spread, spread]^dim`.
    #[arg(long, default_value_t = 5.0)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "synth.csv")]
    name: String,
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

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Select(a) => select(a),
        Command::Experiment(a) => experiment(a),
        Command::GenSynth(a) => gen_synth(a),
    }
}

fn select(a: SelectArgs) -> Result<()> {
    let (ds, train, config_seed) = match &a.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_json_file(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let ds = load_csv(&cfg.dataset.path, &cfg.dataset.label_column, cfg.dataset.has_header)?;
            (ds, cfg.train, cfg.seed)
        }
        None => {
            let path = a.data.as_ref().expect("clap requires --data without --config");
            let ds = load_csv(path, &a.label_column, !a.no_header)?;
            (ds, TrainConfig::default(), 0)
        }
    };
    let seed = a.seed.unwrap_or(config_seed);
    eprintln!(
        "{}: {} samples, {} features; {} with budget {}",
        ds.source,
        ds.n_samples(),
        ds.n_features(),
        a.strategy,
        a.budget
    );
    let picked = select_from_pool(&ds, a.strategy, a.budget, &train, seed)?;

    let out = &a.out_dir;
    write_atomic(&out.join("selection.csv"), &indices_csv(&picked.indices)?)?;
    if let Some(run) = &picked.dual {
        let all: Vec<usize> = (0..ds.n_samples()).collect();
        write_atomic(&out.join("ranking.csv"), &ranking_csv(&run.selection, &all)?)?;
        write_atomic(&out.join("losses/pretrain.csv"), &pretrain_history_csv(&run.pretrain_history)?)?;
        write_atomic(&out.join("losses/joint.csv"), &joint_history_csv(&run.joint_history)?)?;
        write_atomic(&out.join("network.json"), run.network.to_json()?.as_bytes())?;
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&a.config)
        .with_context(|| format!("reading config {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if !a.strategy.is_empty() {
        cfg.strategies = a.strategy;
    }
    if !a.budget.is_empty() {
        cfg.budgets = a.budget;
    }
    let out_dir = a
        .out_dir
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));

    let report = run_experiment(&cfg)?;
    let written = emit_outputs(&report, &out_dir)?;
    print_summary(&report.summary);
    eprintln!("wrote {} files under {}", written.len(), out_dir.display());
    Ok(())
}

fn print_summary(summary: &[dual_core::experiment::Summary]) {
    println!("{:<10} {:>6} {:>10} {:>9} {:>10} {:>9}", "strategy", "m", "accuracy", "std", "auc", "std");
    for s in summary {
        println!(
            "{:<10} {:>6} {:>10.4} {:>9.4} {:>10.4} {:>9.4}",
            s.strategy.name(),
            s.budget,
            s.mean_accuracy,
            s.std_accuracy,
            s.mean_auc,
            s.std_auc
        );
    }
}

fn gen_synth(a: SynthArgs) -> Result<()> {
    if a.counts.is_empty() || a.counts.contains(&0) {
        bail!("--counts needs positive cluster sizes");
    }
    if a.dim == 0 {
        bail!("--dim must be positive");
    }
    let centers = random_centers(a.counts.len(), a.dim, a.spread, a.seed);
    let ds: Dataset = make_blobs(&a.counts, &centers, a.sigma, a.seed.wrapping_add(1))?;
    let path = a.out_dir.join(&a.name);
    write_dataset(&ds, &path)?;
    eprintln!("wrote {} samples to {}", ds.n_samples(), path.display());
    Ok(())
}

fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut buf = Vec::new();
    write_csv(ds, &mut buf)?;
    write_atomic(path, &buf)?;
    Ok(())
}
