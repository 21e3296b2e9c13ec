use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::{MlpGradient, MlpParams};
use crate::baselines::{self, PerturbationConfig, ProjectionMode};
use crate::benchmarks::{Benchmark, ProblemInstance};
use crate::diffopt::{self, SmoothingConfig};
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::solver::{self, KktCertificate, SolverSettings};

/// Gradient rule used to train the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SmoothedQp,
    ExactQp,
    TrueProblem,
    Mse,
    SpoPlus,
    Perturbed,
    IdentityProjection,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::SmoothedQp,
        Method::ExactQp,
        Method::TrueProblem,
        Method::Mse,
        Method::SpoPlus,
        Method::Perturbed,
        Method::IdentityProjection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SmoothedQp => "smoothed_qp",
            Method::ExactQp => "exact_qp",
            Method::TrueProblem => "true_problem",
            Method::Mse => "mse",
            Method::SpoPlus => "spo_plus",
            Method::Perturbed => "perturbed",
            Method::IdentityProjection => "identity_projection",
        }
    }

    /// Only defined for objectives linear in the decision.
    pub fn requires_linear(self) -> bool {
        matches!(self, Method::SpoPlus | Method::Perturbed | Method::IdentityProjection)
    }

    /// What the network output means.
    pub fn prediction_space(self) -> PredictionSpace {
        match self {
            Method::SmoothedQp | Method::ExactQp => PredictionSpace::Projected,
            Method::TrueProblem | Method::Mse => PredictionSpace::Native,
            Method::SpoPlus | Method::Perturbed | Method::IdentityProjection => PredictionSpace::Cost,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSpace {
    /// A point in decision space, mapped to a decision by Euclidean projection.
    Projected,
    /// The objective's own parameters, decided by the true internal problem.
    Native,
    /// A linear cost vector, decided by the linear program.
    Cost,
}

/// Everything a training step needs besides the network and optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub projection: ProjectionMode,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        MethodConfig {
            method,
            smoothing: SmoothingConfig::default(),
            perturbation: PerturbationConfig::default(),
            projection: ProjectionMode::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.smoothing.validate()?;
        self.perturbation.validate()?;
        self.solver.validate()
    }

    /// Rejects method/benchmark pairs the rule is not defined for.
    pub fn check_compatible(&self, bench: &Benchmark) -> Result<()> {
        if self.method.requires_linear() && !bench.objective.is_linear() {
            return Err(Error::Incompatible {
                method: self.method.name().into(),
                benchmark: bench.name.clone(),
                reason: format!("{} objective is not linear", bench.objective.kind_name()),
            });
        }
        Ok(())
    }
}

/// Decision taken for prediction `w_hat` under `method`.
pub fn decide(
    method: Method,
    bench: &Benchmark,
    w_hat: &DVector<f64>,
    inst: &ProblemInstance,
    settings: &SolverSettings,
) -> Result<KktCertificate> {
    match method.prediction_space() {
        PredictionSpace::Projected => solver::project(&bench.polytope, w_hat, settings),
        PredictionSpace::Native => bench.solve_with(w_hat, inst, settings),
        PredictionSpace::Cost => solver::solve_lp(&bench.polytope, w_hat, settings),
    }
}

/// Ascent direction for the prediction together with the decision it was
/// computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub delta_w: DVector<f64>,
    pub decision: DVector<f64>,
    pub heuristic: bool,
}

/// Per-instance `Δŵ` of the configured rule. `step_seed` decorrelates the
/// Monte-Carlo noise of successive perturbed steps.
pub fn prediction_direction(
    cfg: &MethodConfig,
    bench: &Benchmark,
    w_hat: &DVector<f64>,
    inst: &ProblemInstance,
    step_seed: u64,
) -> Result<Direction> {
    let s = &cfg.solver;
    let poly = &bench.polytope;
    let cert = decide(cfg.method, bench, w_hat, inst, s)?;
    let f_x = || bench.objective_eval(&cert.x_star, inst).map(|(_, g)| g);
    let (delta_w, heuristic) = match cfg.method {
        Method::SmoothedQp => {
            let d = diffopt::smoothed_vjp(&f_x()?, &cert, &cfg.smoothing)?;
            (d + diffopt::pdr_gradient(w_hat, &cert, &cfg.smoothing)?, false)
        }
        Method::ExactQp => {
            let v = diffopt::exact_qp_vjp(&f_x()?, &cert, poly)?;
            (v.grad, v.heuristic)
        }
        Method::TrueProblem => {
            let (hess, cross) = bench.second_derivatives(&cert.x_star, w_hat, inst)?;
            let v = diffopt::implicit_kkt_vjp(&f_x()?, &cert, poly, &hess, &cross)?;
            (v.grad, v.heuristic)
        }
        Method::Mse => (baselines::mse_gradient(w_hat, &inst.w)?, false),
        Method::SpoPlus => {
            let c = bench.cost_vector(&inst.w, inst)?;
            (baselines::spo_plus_gradient(poly, w_hat, &c, s)?, false)
        }
        Method::Perturbed => {
            let pcfg = PerturbationConfig {
                seed: mix_seed(cfg.perturbation.seed, step_seed),
                ..cfg.perturbation
            };
            let est = baselines::perturbed_gradient(
                poly,
                w_hat,
                |x| bench.objective_eval(x, inst).map(|(_, g)| g),
                &pcfg,
                s,
                Execution::Sequential,
            )?;
            (est.grad, false)
        }
        Method::IdentityProjection => (baselines::identity_projection_gradient(&f_x()?, cfg.projection), false),
    };
    if !delta_w.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("prediction direction"));
    }
    Ok(Direction {
        delta_w,
        decision: cert.x_star,
        heuristic,
    })
}

/// SplitMix64 finalizer of `a ⊕ rotl(b)`.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Diagnostics of one optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    /// `‖Δθ‖₂` of the (batch-averaged) ascent direction.
    pub grad_norm: f64,
    /// Mean nonnegative regret of the decisions taken during the step.
    pub regret: f64,
    pub heuristic: usize,
    pub failed: usize,
    /// No instance in the batch produced a direction; parameters unchanged.
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    pub elapsed_secs: f64,
}

/// Algorithm-1 style step on a single instance.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    params: &mut MlpParams,
    adam: &mut AdamState,
    inst: &ProblemInstance,
    optimal_value: f64,
    bench: &Benchmark,
    cfg: &MethodConfig,
    step_seed: u64,
) -> StepLog {
    train_batch(params, adam, &[(inst, optimal_value)], bench, cfg, step_seed)
}

/// Averages `Δθ` over the instances of `batch` that succeed, then takes one
/// Adam step. Each entry pairs an instance with its optimal value.
pub fn train_batch(
    params: &mut MlpParams,
    adam: &mut AdamState,
    batch: &[(&ProblemInstance, f64)],
    bench: &Benchmark,
    cfg: &MethodConfig,
    step_seed: u64,
) -> StepLog {
    let start = Instant::now();
    let mut total = MlpGradient::zeros_like(params);
    let mut log = StepLog {
        grad_norm: 0.0,
        regret: 0.0,
        heuristic: 0,
        failed: 0,
        skipped: false,
        errors: Vec::new(),
        elapsed_secs: 0.0,
    };
    let mut ok = 0usize;
    for (k, &(inst, optimal_value)) in batch.iter().enumerate() {
        let result = (|| -> Result<(MlpGradient, f64, bool)> {
            let (w_hat, cache) = params.forward(&inst.o)?;
            let dir = prediction_direction(cfg, bench, &w_hat, inst, mix_seed(step_seed, k as u64))?;
            let regret = optimal_value - bench.objective_eval(&dir.decision, inst)?.0;
            Ok((params.backward(&cache, &dir.delta_w)?, regret, dir.heuristic))
        })();
        match result {
            Ok((g, regret, heuristic)) => {
                total.axpy(1.0, &g);
                log.regret += regret;
                log.heuristic += usize::from(heuristic);
                ok += 1;
            }
            Err(e) => {
                log.failed += 1;
                log.errors.push(format!("instance {}: {e}", inst.id));
            }
        }
    }
    if ok == 0 {
        log.skipped = true;
        log.regret = f64::NAN;
    } else {
        total.scale(1.0 / ok as f64);
        log.regret /= ok as f64;
        log.grad_norm = total.norm();
        if let Err(e) = adam.adam_step(params, &total) {
            log.skipped = true;
            log.errors.push(e.to_string());
        }
    }
    log.elapsed_secs = start.elapsed().as_secs_f64();
    log
}
