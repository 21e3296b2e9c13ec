use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::plot::{band_plot_svg, Series};
use super::run::{EpochRecord, RunReport};
use crate::error::Result;

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub method: String,
    pub benchmark: String,
    pub lambda: Option<f64>,
    pub mean_regret: f64,
    pub std: f64,
    pub normalized: bool,
    pub runtime_secs: f64,
    pub n_seeds: usize,
    pub complete: bool,
}

impl SummaryRow {
    pub fn from_report(r: &RunReport) -> Self {
        let h = r.headline();
        SummaryRow {
            name: r.name.clone(),
            method: r.method.clone(),
            benchmark: r.benchmark.clone(),
            lambda: r.lambda,
            mean_regret: h.mean,
            std: h.std,
            normalized: r.config.normalize_regret,
            runtime_secs: r.runtime_secs,
            n_seeds: h.n,
            complete: r.complete,
        }
    }
}

#[derive(Serialize)]
struct MetricLine<'a> {
    name: &'a str,
    method: &'a str,
    benchmark: &'a str,
    seed: u64,
    #[serde(flatten)]
    record: &'a EpochRecord,
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.jsonl`, `report.json`, `summary.csv`, one
/// `model_seed<k>.json` checkpoint per seed (the selected epoch), and the
/// SVG curves when `plots` is enabled.
pub fn write_all(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut metrics = std::io::BufWriter::new(fs::File::create(dir.join("metrics.jsonl"))?);
    for s in &report.seeds {
        for record in &s.epochs {
            let line = MetricLine {
                name: &report.name,
                method: &report.method,
                benchmark: &report.benchmark,
                seed: s.seed,
                record,
            };
            serde_json::to_writer(&mut metrics, &line)?;
            metrics.write_all(b"\n")?;
        }
        if let Some(model) = &s.best_model {
            model.save(&dir.join(format!("model_seed{}.json", s.seed)))?;
        }
    }
    metrics.flush()?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write_summary(&[SummaryRow::from_report(report)], &dir.join("summary.csv"))?;
    if report.config.plots {
        let regret: fn(&EpochRecord) -> f64 = if report.config.normalize_regret {
            |e| e.test_regret_normalized
        } else {
            |e| e.test_regret
        };
        let series = |metric| vec![Series { label: report.method.clone(), runs: report.curves(metric) }];
        fs::write(dir.join("regret.svg"), band_plot_svg("test regret", "epoch", &series(regret)))?;
        fs::write(
            dir.join("grad_norm.svg"),
            band_plot_svg("gradient norm ‖Δθ‖₂", "epoch", &series(|e| e.grad_norm)),
        )?;
    }
    Ok(())
}

/// Reads a `report.json` written by [`write_all`].
pub fn load_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
