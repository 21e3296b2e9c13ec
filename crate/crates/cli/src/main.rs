use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pno_core::harness::{
    evaluate, load_report, optimal_values, run_experiment, split_dataset, write_summary, ExperimentConfig, SummaryRow,
};
use pno_core::predictor::Checkpoint;

/// Predict-and-optimize experiments with smoothed projection layers.
#[derive(Parser)]
#[command(name = "pno", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; override `seeds` in the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the benchmark dataset of every seed as JSON.
    Generate(Common),
    /// Train and evaluate; writes metrics, report, summary and checkpoints.
    Train(Common),
    /// Evaluate a saved checkpoint on the splits of its seed.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train` (model_seed<k>.json).
        #[arg(long)]
        model: PathBuf,
    },
    /// Merge report.json files (or directories holding them) into one CSV.
    Report {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Generate(c) => generate(&c),
        Command::Train(c) => train(&c),
        Command::Evaluate { common, model } => evaluate_model(&common, &model),
        Command::Report { inputs, out } => report(&inputs, &out),
    }
}

fn generate(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    for &seed in &cfg.seeds {
        let bench = cfg.benchmark.generate(seed)?;
        let path = dir.join(format!("{}_seed{seed}.json", bench.name));
        bench.dump(&path)?;
        log::info!("wrote {} ({} instances)", path.display(), bench.dataset.len());
    }
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let report = run_experiment(&cfg)?;
    let h = report.headline();
    println!(
        "{} on {}: test regret {:.6} ± {:.6} over {} seed(s), {:.1}s",
        report.method, report.benchmark, h.mean, h.std, h.n, report.runtime_secs
    );
    for f in &report.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    if !report.complete {
        bail!("{} seed(s) failed", report.failures.len());
    }
    Ok(())
}

fn evaluate_model(c: &Common, model: &Path) -> Result<()> {
    let cfg = c.load()?;
    let &[seed] = cfg.seeds.as_slice() else {
        bail!("evaluate needs exactly one seed (use --seeds)");
    };
    let ckpt = Checkpoint::load(model).with_context(|| format!("reading {}", model.display()))?;
    let bench = cfg.benchmark.generate(seed)?;
    let split = split_dataset(bench.dataset.len(), seed)?;
    let optimal = optimal_values(&cfg, &bench)?;
    let mut out = serde_json::Map::new();
    for (name, idx) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
        let e = evaluate(&cfg, &bench, &ckpt.params, idx, &optimal)?;
        out.insert(name.into(), serde_json::to_value(e)?);
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn report(inputs: &[PathBuf], out: &Path) -> Result<()> {
    if inputs.is_empty() {
        bail!("no reports given");
    }
    let mut rows = Vec::new();
    for input in inputs {
        let path = if input.is_dir() { input.join("report.json") } else { input.clone() };
        let r = load_report(&path).with_context(|| format!("reading {}", path.display()))?;
        rows.push(SummaryRow::from_report(&r));
    }
    write_summary(&rows, out)?;
    for r in &rows {
        println!("{:<22} {:<14} {:>12.6} ± {:<10.6} {:>8.1}s", r.method, r.benchmark, r.mean_regret, r.std, r.runtime_secs);
    }
    Ok(())
}
