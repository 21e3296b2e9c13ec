use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{PerturbationConfig, ProjectionMode};
use crate::benchmarks::{BenchmarkSpec, PortfolioVariant};
use crate::diffopt::SmoothingConfig;
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::predictor::{Method, MethodConfig, DEFAULT_HIDDEN};
use crate::solver::SolverSettings;

/// One experiment: a method trained on a benchmark for several seeds.
///
/// Missing fields take the tuned defaults: learning rate `5e-5`, batch size
/// 1, `x_shift = 0.1`, and `x_scale = 0.1` for the linear baselines and the
/// log-sum-exp portfolio, `1` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub benchmark: BenchmarkSpec,
    pub method: Method,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub x_scale: Option<f64>,
    #[serde(default = "default_shift")]
    pub x_shift: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
    #[serde(default)]
    pub alpha_reg: f64,
    #[serde(default = "default_zero_grad_tol")]
    pub zero_grad_tol: f64,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub projection: ProjectionMode,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Divide reported regret by the mean `|max f|` of the evaluated split.
    #[serde(default = "yes")]
    pub normalize_regret: bool,
    /// Run seeds on the rayon pool.
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plots: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}
fn default_epochs() -> usize {
    80
}
fn default_batch() -> usize {
    1
}
fn default_lr() -> f64 {
    5e-5
}
fn default_shift() -> f64 {
    0.1
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}
fn default_slope() -> f64 {
    0.01
}
fn default_zero_grad_tol() -> f64 {
    SmoothingConfig::default().zero_grad_tol
}
fn yes() -> bool {
    true
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(benchmark: BenchmarkSpec, method: Method) -> Self {
        ExperimentConfig {
            name: None,
            benchmark,
            method,
            seeds: default_seeds(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            x_scale: None,
            x_shift: default_shift(),
            hidden: default_hidden(),
            leaky_slope: default_slope(),
            alpha_reg: 0.0,
            zero_grad_tol: default_zero_grad_tol(),
            perturbation: PerturbationConfig::default(),
            projection: ProjectionMode::default(),
            solver: SolverSettings::default(),
            normalize_regret: true,
            execution: Execution::default(),
            output_dir: None,
            plots: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.method, self.benchmark.name()))
    }

    pub fn effective_x_scale(&self) -> f64 {
        if let Some(s) = self.x_scale {
            return s;
        }
        let log_sum_exp = matches!(
            self.benchmark,
            BenchmarkSpec::Portfolio {
                variant: PortfolioVariant::LogSumExp,
                ..
            }
        );
        if log_sum_exp || self.method.requires_linear() {
            0.1
        } else {
            1.0
        }
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig {
            method: self.method,
            smoothing: SmoothingConfig {
                alpha_reg: self.alpha_reg,
                zero_grad_tol: self.zero_grad_tol,
                ..SmoothingConfig::default()
            },
            perturbation: self.perturbation,
            projection: self.projection,
            solver: self.solver,
        }
    }

    /// Range checks and the method/benchmark guard (where the benchmark's
    /// linearity is known without loading data).
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.effective_x_scale().is_finite() && self.x_shift.is_finite()) {
            return bad("x_scale and x_shift must be finite".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if !(self.leaky_slope.is_finite()) {
            return bad("leaky_slope must be finite".into());
        }
        self.method_config().validate()?;
        if self.method.requires_linear() && self.benchmark.is_linear() == Some(false) {
            return Err(Error::Incompatible {
                method: self.method.name().into(),
                benchmark: self.benchmark.name(),
                reason: "the method needs an objective linear in the decision".into(),
            });
        }
        Ok(())
    }
}
