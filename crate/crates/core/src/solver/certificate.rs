use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{self, serde_dvec};
use crate::polytope::{ActiveSet, Polytope};
use crate::solver::SolverSettings;

/// Solution point together with the evidence that it is optimal.
///
/// `internal_gradient` is the gradient of the maximized objective at
/// `x_star`; at an optimum it equals `Σ αᵢ Gᵢ + Aᵀν` with `α ≥ 0` over the
/// active inequality rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    #[serde(with = "serde_dvec")]
    pub x_star: DVector<f64>,
    pub active: ActiveSet,
    /// One multiplier per entry of `active.indices`.
    #[serde(with = "serde_dvec")]
    pub ineq_multipliers: DVector<f64>,
    #[serde(with = "serde_dvec")]
    pub eq_multipliers: DVector<f64>,
    #[serde(with = "serde_dvec")]
    pub internal_gradient: DVector<f64>,
    pub strict_complementarity: bool,
    pub kkt_residual: f64,
    pub rank_deficient: bool,
    pub converged: bool,
}

impl KktCertificate {
    /// Multiplier of inequality row `row` (0 when inactive).
    pub fn multiplier(&self, row: usize) -> f64 {
        self.active
            .indices
            .binary_search(&row)
            .map(|k| self.ineq_multipliers[k])
            .unwrap_or(0.0)
    }

    /// Smallest multiplier over active inequalities (`+∞` if none).
    pub fn min_multiplier(&self) -> f64 {
        self.ineq_multipliers.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Output of the active-set methods: a point and the working set with its
/// multipliers in maximization convention.
#[derive(Debug, Clone)]
pub(crate) struct WorkingSetSolution {
    pub x: DVector<f64>,
    pub ineq: Vec<(usize, f64)>,
    pub eq: Vec<(usize, f64)>,
}

pub(crate) fn from_working_set(
    p: &Polytope,
    sol: WorkingSetSolution,
    grad: DVector<f64>,
    settings: &SolverSettings,
) -> Result<KktCertificate> {
    let (ineq_res, _) = p.evaluate_constraints(&sol.x)?;
    let mut active = p.active_set_unchecked(&ineq_res, settings.active_tol);
    for &(row, _) in &sol.ineq {
        if !active.contains(row) {
            active.indices.push(row);
        }
    }
    active.indices.sort_unstable();
    let mut alpha = DVector::zeros(active.len());
    for &(row, a) in &sol.ineq {
        let k = active.indices.binary_search(&row).expect("inserted above");
        alpha[k] = a;
    }
    let mut nu = DVector::zeros(p.n_eq());
    for &(row, v) in &sol.eq {
        nu[row] = v;
    }
    Ok(finish(p, sol.x, active, alpha, nu, grad, settings, true))
}

/// Certificate for an arbitrary point; multipliers are recovered by
/// nonnegative least squares over the rows active at tolerance.
pub(crate) fn from_point(
    p: &Polytope,
    x: DVector<f64>,
    grad: DVector<f64>,
    settings: &SolverSettings,
    converged: bool,
) -> KktCertificate {
    let ineq_res = p.g() * &x - p.h();
    let active = p.active_set_unchecked(&ineq_res, settings.active_tol);
    let g_act = linalg::select_rows(p.g(), &active.indices).transpose();
    let a_t = p.a().transpose();
    let (alpha, nu) = linalg::nnls_with_free(&a_t, &g_act, &grad);
    finish(p, x, active, alpha, nu, grad, settings, converged)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &Polytope,
    x: DVector<f64>,
    active: ActiveSet,
    alpha: DVector<f64>,
    nu: DVector<f64>,
    grad: DVector<f64>,
    settings: &SolverSettings,
    converged: bool,
) -> KktCertificate {
    let ineq_res = p.g() * &x - p.h();
    let eq_res = p.a() * &x - p.b();
    let g_act = linalg::select_rows(p.g(), &active.indices);
    let stationarity = &grad - g_act.tr_mul(&alpha) - p.a().tr_mul(&nu);
    let primal = ineq_res
        .iter()
        .map(|r| r.max(0.0))
        .chain(eq_res.iter().map(|r| r.abs()))
        .fold(0.0, f64::max);
    let complementarity = active
        .indices
        .iter()
        .zip(alpha.iter())
        .map(|(&i, &a)| (a * ineq_res[i]).abs())
        .fold(0.0, f64::max);
    let dual = alpha.iter().map(|a| (-a).max(0.0)).fold(0.0, f64::max);
    let kkt_residual = stationarity.amax().max(primal).max(complementarity).max(dual);

    let strict_complementarity = alpha.iter().all(|&a| a > settings.strict_tol);
    let rows: DMatrix<f64> = p.active_rows(&active);
    let rank_deficient = linalg::rank(&rows) < rows.nrows();

    KktCertificate {
        x_star: x,
        active,
        ineq_multipliers: alpha,
        eq_multipliers: nu,
        internal_gradient: grad,
        strict_complementarity,
        kkt_residual,
        rank_deficient,
        converged,
    }
}
