use std::collections::BTreeSet;
use std::sync::Mutex;

use nalgebra::DVector;

use super::*;
use crate::benchmarks::{BenchmarkSpec, PortfolioSource, PortfolioVariant};
use crate::error::Error;
use crate::parallel::Execution;
use crate::predictor::Method;

fn portfolio(lambda: f64, n_samples: usize) -> BenchmarkSpec {
    BenchmarkSpec::Portfolio {
        n_securities: 5,
        lambda,
        n_samples,
        variant: PortfolioVariant::Standard,
        source: PortfolioSource::Synthetic,
    }
}

fn small(method: Method, bench: BenchmarkSpec) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(bench, method);
    cfg.seeds = vec![0];
    cfg.epochs = 2;
    cfg.hidden = vec![16, 16];
    cfg.learning_rate = 1e-3;
    cfg
}

#[test]
fn split_sizes() {
    let s = split_dataset(10, 0).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (7, 2, 1));
    let s = split_dataset(201, 3).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (140, 40, 21));
}

#[test]
fn split_is_a_partition() {
    let s = split_dataset(57, 9).unwrap();
    let all: BTreeSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
    assert_eq!(all.len(), 57);
    assert_eq!(all, (0..57).collect());
}

#[test]
fn split_is_seeded() {
    assert_eq!(split_dataset(40, 5).unwrap(), split_dataset(40, 5).unwrap());
    assert_ne!(split_dataset(40, 5).unwrap(), split_dataset(40, 6).unwrap());
    assert!(matches!(split_dataset(9, 0), Err(Error::DatasetTooSmall(9, 10))));
}

#[test]
fn smoke_run_writes_schema_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Method::Mse, portfolio(0.5, 20));
    cfg.output_dir = Some(dir.path().to_path_buf());
    cfg.plots = true;
    let report = run_experiment(&cfg).unwrap();
    assert!(report.complete);
    assert_eq!(report.seeds.len(), 1);
    assert_eq!(report.seeds[0].epochs.len(), 2);

    let back = load_report(&dir.path().join("report.json")).unwrap();
    assert_eq!(back.without_timing(), report.without_timing());
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(dir.path().join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    for key in ["seed", "epoch", "train_regret", "val_regret", "test_regret", "grad_norm", "wall_secs"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let header = summary.lines().next().unwrap();
    assert!(header.starts_with("name,method,benchmark,lambda,mean_regret,std"), "{header}");
    assert!(dir.path().join("model_seed0.json").exists());
    let svg = std::fs::read_to_string(dir.path().join("regret.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn reruns_are_identical() {
    for method in [Method::SmoothedQp, Method::Perturbed] {
        let bench = if method == Method::Perturbed { portfolio(0.0, 30) } else { portfolio(0.3, 30) };
        let mut cfg = small(method, bench);
        cfg.seeds = vec![1, 2];
        cfg.alpha_reg = 0.1;
        let a = run_experiment(&cfg).unwrap().without_timing();
        let b = run_experiment(&cfg).unwrap().without_timing();
        assert_eq!(a, b);
        cfg.execution = Execution::Sequential;
        let mut c = run_experiment(&cfg).unwrap().without_timing();
        c.config.execution = Execution::Parallel;
        assert_eq!(a, c);
    }
}

#[test]
fn linear_baselines_reject_quadratic_portfolio() {
    let cfg = small(Method::SpoPlus, portfolio(1.0, 20));
    assert!(matches!(cfg.validate(), Err(Error::Incompatible { .. })));
    assert!(matches!(run_experiment(&cfg), Err(Error::Incompatible { .. })));
    let lse = BenchmarkSpec::Portfolio {
        n_securities: 4,
        lambda: 0.0,
        n_samples: 20,
        variant: PortfolioVariant::LogSumExp,
        source: PortfolioSource::Synthetic,
    };
    assert!(small(Method::IdentityProjection, lse).validate().is_err());
    assert!(small(Method::SpoPlus, portfolio(0.0, 20)).validate().is_ok());
}

#[test]
fn selection_uses_validation_minimum() {
    let mut cfg = small(Method::SmoothedQp, portfolio(0.1, 40));
    cfg.epochs = 5;
    cfg.learning_rate = 3e-3;
    let report = run_experiment(&cfg).unwrap();
    for s in &report.seeds {
        let min = s.epochs.iter().map(|e| e.val_regret).fold(f64::INFINITY, f64::min);
        let chosen = &s.epochs[s.selected_epoch - 1];
        assert_eq!(chosen.val_regret, min);
        assert_eq!(s.test_regret, chosen.test_regret);
        for e in &s.epochs {
            assert!(e.val_regret >= -1e-9 && e.test_regret >= -1e-9 && e.train_regret >= -1e-9);
        }
    }
}

struct Recorder(Mutex<Vec<(f64, f64, f64)>>);

impl RunHook for Recorder {
    fn on_epoch(&self, _seed: u64, r: &EpochRecord) {
        self.0.lock().unwrap().push((r.train_regret, r.val_regret, r.grad_norm));
    }
}

#[test]
fn test_split_does_not_influence_training() {
    let mut cfg = small(Method::SmoothedQp, portfolio(0.2, 30));
    cfg.epochs = 4;
    let bench = cfg.benchmark.generate(4).unwrap();
    let split = split_dataset(bench.dataset.len(), 4).unwrap();
    let mut tampered = bench.clone();
    for &k in &split.test {
        let inst = &mut tampered.dataset[k];
        inst.o = inst.o.map(|v| -3.0 * v + 1.0);
        inst.w = DVector::from_element(inst.w.len(), 0.5) - &inst.w;
    }
    let (ha, hb) = (Recorder(Mutex::new(vec![])), Recorder(Mutex::new(vec![])));
    let a = run_on_benchmark(&cfg, &bench, 4, &ha).unwrap();
    let b = run_on_benchmark(&cfg, &tampered, 4, &hb).unwrap();
    assert_eq!(*ha.0.lock().unwrap(), *hb.0.lock().unwrap());
    assert_eq!(a.selected_epoch, b.selected_epoch);
    assert_ne!(a.test_regret, b.test_regret);
}

#[test]
fn config_defaults_and_guards() {
    let cfg: ExperimentConfig =
        serde_json::from_str(r#"{"benchmark": {"kind": "portfolio", "lambda": 0.1}, "method": "smoothed_qp"}"#).unwrap();
    assert_eq!(cfg.seeds, vec![0, 1, 2, 3]);
    assert_eq!(cfg.learning_rate, 5e-5);
    assert_eq!(cfg.batch_size, 1);
    assert_eq!(cfg.epochs, 80);
    assert_eq!(cfg.x_shift, 0.1);
    assert_eq!(cfg.effective_x_scale(), 1.0);
    assert_eq!(cfg.hidden, vec![256, 256]);
    assert_eq!(cfg.perturbation.n_samples, 4);
    assert_eq!(cfg.perturbation.sigma, 0.05);
    let knap: ExperimentConfig =
        serde_json::from_str(r#"{"benchmark": {"kind": "knapsack"}, "method": "spo_plus"}"#).unwrap();
    assert_eq!(knap.effective_x_scale(), 0.1);
    let knap_qp: ExperimentConfig =
        serde_json::from_str(r#"{"benchmark": {"kind": "knapsack"}, "method": "smoothed_qp"}"#).unwrap();
    assert_eq!(knap_qp.effective_x_scale(), 1.0);
    let lse: ExperimentConfig = serde_json::from_str(
        r#"{"benchmark": {"kind": "portfolio", "lambda": 0.0, "variant": "lse"}, "method": "smoothed_qp"}"#,
    )
    .unwrap();
    assert_eq!(lse.effective_x_scale(), 0.1);
    let typo = serde_json::from_str::<ExperimentConfig>(r#"{"benchmark": {"kind": "knapsack"}, "method": "mse", "epoch": 3}"#);
    assert!(typo.is_err());
    let mut bad = small(Method::Mse, portfolio(0.0, 20));
    bad.learning_rate = -1.0;
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn aggregate_statistics() {
    let a = Aggregate::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(a.mean, 2.5);
    assert!((a.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(Aggregate::of(&[7.0]).std, 0.0);
    let b = Aggregate { mean: 0.0, std: 2.0, n: 4 };
    assert!((b.pooled_se(&b) - (2.0f64).sqrt()).abs() < 1e-15);
}
