use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::split::{split_dataset, Split};
use crate::benchmarks::{stream, Benchmark};
use crate::error::Result;
use crate::parallel;
use crate::predictor::{decide, mix_seed, train_batch, AdamState, Checkpoint, MlpParams};

/// Metrics after one training epoch. Regret is nonnegative (`max f − f`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean regret of the decisions taken while training (loss proxy).
    pub train_regret: f64,
    pub val_regret: f64,
    pub test_regret: f64,
    pub val_regret_normalized: f64,
    pub test_regret_normalized: f64,
    /// Mean `‖Δθ‖₂` over the epoch's optimizer steps.
    pub grad_norm: f64,
    pub steps: usize,
    pub skipped_steps: usize,
    pub heuristic_steps: usize,
    pub failed_instances: usize,
    pub wall_secs: f64,
}

/// Result of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation regret.
    pub selected_epoch: usize,
    pub val_regret: f64,
    pub test_regret: f64,
    pub test_regret_normalized: f64,
    pub wall_secs: f64,
    #[serde(skip)]
    pub best_model: Option<Checkpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Aggregate { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Aggregate { mean, std, n }
    }

    /// Standard error of `self.mean − other.mean`.
    pub fn pooled_se(&self, other: &Aggregate) -> f64 {
        (self.std.powi(2) / self.n as f64 + other.std.powi(2) / other.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub method: String,
    pub benchmark: String,
    pub lambda: Option<f64>,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub failures: Vec<SeedFailure>,
    /// Every seed finished.
    pub complete: bool,
    pub test_regret: Aggregate,
    pub test_regret_normalized: Aggregate,
    pub runtime_secs: f64,
}

impl RunReport {
    /// Regret aggregate selected by `normalize_regret`.
    pub fn headline(&self) -> Aggregate {
        if self.config.normalize_regret {
            self.test_regret_normalized
        } else {
            self.test_regret
        }
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.runtime_secs = 0.0;
        for s in &mut r.seeds {
            s.wall_secs = 0.0;
            s.best_model = None;
            for e in &mut s.epochs {
                e.wall_secs = 0.0;
            }
        }
        r
    }

    /// Per-epoch values of `metric` for each successful seed.
    pub fn curves(&self, metric: fn(&EpochRecord) -> f64) -> Vec<Vec<f64>> {
        self.seeds
            .iter()
            .map(|s| s.epochs.iter().map(metric).collect())
            .collect()
    }
}

/// Regret of a model on a subset of instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub regret: f64,
    pub regret_normalized: f64,
}

/// Mean nonnegative regret of `params` on `indices`.
pub fn evaluate(
    cfg: &ExperimentConfig,
    bench: &Benchmark,
    params: &MlpParams,
    indices: &[usize],
    optimal: &[f64],
) -> Result<Evaluation> {
    let mut regret = 0.0;
    let mut scale = 0.0;
    for &k in indices {
        let inst = &bench.dataset[k];
        let w_hat = params.predict(&inst.o)?;
        let cert = decide(cfg.method, bench, &w_hat, inst, &cfg.solver)?;
        let value = bench.objective_eval(&cert.x_star, inst)?.0;
        regret += optimal[k] - value;
        scale += optimal[k].abs();
    }
    let n = indices.len().max(1) as f64;
    let regret = regret / n;
    let scale = scale / n;
    let regret_normalized = if scale > 0.0 { regret / scale } else { regret };
    Ok(Evaluation { regret, regret_normalized })
}

/// Optimal values `max_x f(x, w)` for every instance.
pub fn optimal_values(cfg: &ExperimentConfig, bench: &Benchmark) -> Result<Vec<f64>> {
    bench
        .dataset
        .iter()
        .map(|inst| bench.optimum(inst, &cfg.solver).map(|(v, _)| v))
        .collect()
}

/// Fresh network and optimizer for `seed`.
pub fn init_model(cfg: &ExperimentConfig, bench: &Benchmark, seed: u64) -> Result<(MlpParams, AdamState)> {
    let mut rng = stream(seed, 42);
    let params = MlpParams::init(
        bench.obs_dim(),
        &cfg.hidden,
        bench.param_dim(),
        cfg.leaky_slope,
        cfg.effective_x_scale(),
        cfg.x_shift,
        &mut rng,
    )?;
    let adam = AdamState::new(&params, cfg.learning_rate);
    Ok((params, adam))
}

/// Observer of per-seed training; used to check that test data stays out of
/// training and model selection.
pub trait RunHook: Sync {
    fn on_epoch(&self, _seed: u64, _record: &EpochRecord) {}
}

struct NoHook;
impl RunHook for NoHook {}

/// Trains one seed on an already generated benchmark.
pub fn run_on_benchmark(
    cfg: &ExperimentConfig,
    bench: &Benchmark,
    seed: u64,
    hook: &dyn RunHook,
) -> Result<SeedReport> {
    let start = Instant::now();
    let mcfg = cfg.method_config();
    mcfg.check_compatible(bench)?;
    let Split { train, validation, test } = split_dataset(bench.dataset.len(), seed)?;
    let optimal = optimal_values(cfg, bench)?;
    let (mut params, mut adam) = init_model(cfg, bench, seed)?;
    let mut order_rng = stream(seed, 43);

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, f64, f64, Checkpoint)> = None;
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        let epoch_start = Instant::now();
        let mut order = train.clone();
        order.shuffle(&mut order_rng);
        let (mut norm_sum, mut regret_sum, mut regret_n) = (0.0, 0.0, 0usize);
        let (mut steps, mut skipped, mut heuristic, mut failed) = (0, 0, 0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&k| (&bench.dataset[k], optimal[k])).collect();
            let log = train_batch(&mut params, &mut adam, &batch, bench, &mcfg, mix_seed(seed, step));
            step += 1;
            steps += 1;
            failed += log.failed;
            heuristic += log.heuristic;
            for e in &log.errors {
                log::debug!("seed {seed} epoch {epoch}: {e}");
            }
            if log.skipped {
                skipped += 1;
                continue;
            }
            norm_sum += log.grad_norm;
            regret_sum += log.regret * (batch.len() - log.failed) as f64;
            regret_n += batch.len() - log.failed;
        }
        let val = evaluate(cfg, bench, &params, &validation, &optimal)?;
        let tst = evaluate(cfg, bench, &params, &test, &optimal)?;
        let record = EpochRecord {
            epoch,
            train_regret: regret_sum / regret_n.max(1) as f64,
            val_regret: val.regret,
            test_regret: tst.regret,
            val_regret_normalized: val.regret_normalized,
            test_regret_normalized: tst.regret_normalized,
            grad_norm: norm_sum / (steps - skipped).max(1) as f64,
            steps,
            skipped_steps: skipped,
            heuristic_steps: heuristic,
            failed_instances: failed,
            wall_secs: epoch_start.elapsed().as_secs_f64(),
        };
        if failed > 0 {
            log::warn!("seed {seed} epoch {epoch}: {failed} training instance(s) failed");
        }
        hook.on_epoch(seed, &record);
        if best.as_ref().is_none_or(|b| val.regret < b.0) {
            best = Some((
                val.regret,
                epoch,
                tst.regret,
                tst.regret_normalized,
                Checkpoint::new(&params, &adam, &order_rng),
            ));
        }
        epochs.push(record);
    }
    let (val_regret, selected_epoch, test_regret, test_regret_normalized, model) =
        best.expect("at least one epoch");
    Ok(SeedReport {
        seed,
        epochs,
        selected_epoch,
        val_regret,
        test_regret,
        test_regret_normalized,
        wall_secs: start.elapsed().as_secs_f64(),
        best_model: Some(model),
    })
}

/// Generates the benchmark for `seed` and trains on it.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedReport> {
    let bench = cfg.benchmark.generate(seed)?;
    run_on_benchmark(cfg, &bench, seed, &NoHook)
}

/// Runs every seed (in parallel when configured), aggregates, and writes
/// outputs when `output_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let results = parallel::map(cfg.execution, &cfg.seeds, |&seed| (seed, run_seed(cfg, seed)));
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(s) => seeds.push(s),
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                failures.push(SeedFailure { seed, error: e.to_string() });
            }
        }
    }
    if seeds.is_empty() {
        if let Some(f) = failures.first() {
            // surface the first error when nothing succeeded
            return Err(crate::Error::Config(format!("all seeds failed; seed {}: {}", f.seed, f.error)));
        }
    }
    let raw: Vec<f64> = seeds.iter().map(|s| s.test_regret).collect();
    let norm: Vec<f64> = seeds.iter().map(|s| s.test_regret_normalized).collect();
    let report = RunReport {
        name: cfg.display_name(),
        method: cfg.method.name().into(),
        benchmark: cfg.benchmark.name(),
        lambda: cfg.benchmark.lambda(),
        config: cfg.clone(),
        complete: failures.is_empty(),
        seeds,
        failures,
        test_regret: Aggregate::of(&raw),
        test_regret_normalized: Aggregate::of(&norm),
        runtime_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &cfg.output_dir {
        super::output::write_all(&report, dir)?;
    }
    Ok(report)
}
