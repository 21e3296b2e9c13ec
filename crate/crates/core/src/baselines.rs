//! Gradient rules the smoothed projection is compared against, and regret.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{Benchmark, ProblemInstance};
use crate::error::{check_dim, Error, Result};
use crate::parallel::{self, Execution};
use crate::polytope::Polytope;
use crate::solver::{solve_lp, SolverSettings};

/// Monte-Carlo settings of the perturbed-optimizer estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub n_samples: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            n_samples: 4,
            sigma: 0.05,
            seed: 0,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("perturbation n_samples must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("perturbation sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Post-processing applied by the identity-with-projection rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Remove the component along the all-ones direction.
    Mean,
    /// Scale to unit length.
    #[default]
    Norm,
    /// Mean-center, then scale to unit length.
    Both,
}

/// `f(decision, w) − max_x f(x, w)`; nonpositive up to solver tolerance.
pub fn regret(
    bench: &Benchmark,
    decision: &DVector<f64>,
    inst: &ProblemInstance,
    settings: &SolverSettings,
) -> Result<f64> {
    let (best, _) = bench.optimum(inst, settings)?;
    regret_against(bench, decision, inst, best)
}

/// [`regret`] with a precomputed optimal value.
pub fn regret_against(
    bench: &Benchmark,
    decision: &DVector<f64>,
    inst: &ProblemInstance,
    optimal_value: f64,
) -> Result<f64> {
    let (value, _) = bench.objective_eval(decision, inst)?;
    Ok(value - optimal_value)
}

/// Descent direction of the SPO+ loss for a linear objective,
/// `2(x*(w) − x*(2ŵ − w))` with `x*(v) = argmax vᵀx`.
pub fn spo_plus_gradient(
    p: &Polytope,
    w_hat: &DVector<f64>,
    w: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<DVector<f64>> {
    check_dim("spo_plus_gradient w_hat", p.n_vars(), w_hat.len())?;
    check_dim("spo_plus_gradient w", p.n_vars(), w.len())?;
    let x_true = solve_lp(p, w, settings)?.x_star;
    let x_shift = solve_lp(p, &(w_hat * 2.0 - w), settings)?.x_star;
    Ok((x_true - x_shift) * 2.0)
}

/// Estimate returned by [`perturbed_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedEstimate {
    pub grad: DVector<f64>,
    /// `(1/M) Σ x*(ŵ + σz_m)`.
    pub mean_decision: DVector<f64>,
}

/// Score-function estimate of `f_xᵀ ∇_ŵ E[x*(ŵ + σz)]`:
/// `(1/(Mσ)) Σ_m (f_xᵀ x*(ŵ + σz_m)) z_m`, with `f_x = f_x_of(x̄)` taken at
/// the mean decision.
///
/// Noise is drawn sequentially from `cfg.seed`, so the result does not
/// depend on `exec`.
pub fn perturbed_gradient<F>(
    p: &Polytope,
    w_hat: &DVector<f64>,
    f_x_of: F,
    cfg: &PerturbationConfig,
    settings: &SolverSettings,
    exec: Execution,
) -> Result<PerturbedEstimate>
where
    F: FnOnce(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    let n = p.n_vars();
    check_dim("perturbed_gradient", n, w_hat.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<DVector<f64>> = (0..cfg.n_samples)
        .map(|_| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let decisions = parallel::map(exec, &noise, |z| {
        solve_lp(p, &(w_hat + z * cfg.sigma), settings).map(|c| c.x_star)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let m = cfg.n_samples as f64;
    let mean_decision = decisions.iter().fold(DVector::zeros(n), |acc, x| acc + x) / m;
    let f_x = f_x_of(&mean_decision)?;
    check_dim("perturbed_gradient f_x", n, f_x.len())?;
    let grad = decisions
        .iter()
        .zip(&noise)
        .fold(DVector::zeros(n), |acc, (x, z)| acc + z * f_x.dot(x))
        / (m * cfg.sigma);
    Ok(PerturbedEstimate { grad, mean_decision })
}

/// Identity Jacobian followed by the configured projection of `f_x`.
pub fn identity_projection_gradient(f_x: &DVector<f64>, mode: ProjectionMode) -> DVector<f64> {
    let centered = || f_x.add_scalar(-f_x.mean());
    let normalize = |v: DVector<f64>| {
        let norm = v.norm().max(1e-12);
        v / norm
    };
    match mode {
        ProjectionMode::Mean => centered(),
        ProjectionMode::Norm => normalize(f_x.clone()),
        ProjectionMode::Both => normalize(centered()),
    }
}

/// Descent direction `−2(ŵ − w)` of the squared error.
pub fn mse_gradient(w_hat: &DVector<f64>, w_target: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("mse_gradient", w_target.len(), w_hat.len())?;
    Ok((w_hat - w_target) * -2.0)
}
