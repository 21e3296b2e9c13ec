//! Solvers for the internal problems over a [`Polytope`].
//!
//! * [`project`]: Euclidean projection, `max −‖x − ŵ‖²`.
//! * [`solve_qp`]: `max pᵀx − λ xᵀQx` (a vertex LP when `λQ = 0`).
//! * [`solve_concave`]: smooth concave objectives via projected gradient.
//!
//! Strictly convex problems use a dual active-set method, linear ones a
//! vertex-following active-set method. Both report the working set they
//! terminate with, so the returned certificates carry exact active sets.

mod certificate;
mod concave;
mod dual;
mod lp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::polytope::{Polytope, DEFAULT_ACTIVE_TOL};

pub use certificate::KktCertificate;
pub use concave::solve_concave;

/// Tolerances and iteration limits shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Bound on the KKT residual (and on the projected-gradient norm for
    /// [`solve_concave`]).
    pub kkt_tol: f64,
    /// Multipliers above this value count as strictly complementary.
    pub strict_tol: f64,
    /// Absolute residual below which an inequality is active.
    pub active_tol: f64,
    /// Armijo sufficient-increase constant for the projected-gradient path.
    pub armijo: f64,
    /// Backtracking contraction factor.
    pub backtrack: f64,
    /// Smallest backtracking step before the line search gives up.
    pub min_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 10_000,
            kkt_tol: 1e-8,
            strict_tol: 1e-6,
            active_tol: DEFAULT_ACTIVE_TOL,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-20,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kkt_tol", self.kkt_tol),
            ("strict_tol", self.strict_tol),
            ("active_tol", self.active_tol),
            ("armijo", self.armijo),
            ("min_step", self.min_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Euclidean projection of `w_hat` onto `p`.
///
/// The certificate's internal gradient is `2(ŵ − x̂)`.
pub fn project(p: &Polytope, w_hat: &DVector<f64>, settings: &SolverSettings) -> Result<KktCertificate> {
    check_dim("project", p.n_vars(), w_hat.len())?;
    let n = p.n_vars();
    let h = DMatrix::identity(n, n) * 2.0;
    let c = w_hat * -2.0;
    let sol = dual::solve(&h, &c, p, settings)?;
    let grad = (w_hat - &sol.x) * 2.0;
    certificate::from_working_set(p, sol, grad, settings)
}

/// Maximizes `pᵀx − λ xᵀQx` over the polytope.
pub fn solve_qp(
    poly: &Polytope,
    p: &DVector<f64>,
    q: &DMatrix<f64>,
    lambda: f64,
    settings: &SolverSettings,
) -> Result<KktCertificate> {
    let n = poly.n_vars();
    check_dim("solve_qp p", n, p.len())?;
    check_dim("solve_qp Q rows", n, q.nrows())?;
    check_dim("solve_qp Q cols", n, q.ncols())?;
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let asym = (q - q.transpose()).amax();
    if asym > 1e-9 * (1.0 + q.amax()) {
        return Err(Error::NotPsd(format!("Q is not symmetric (asymmetry {asym:e})")));
    }
    let hess = q * (2.0 * lambda);
    if hess.amax() == 0.0 {
        return solve_lp(poly, p, settings);
    }
    let c = -p;
    match dual::solve(&hess, &c, poly, settings) {
        Ok(sol) => {
            let grad = p - &hess * &sol.x;
            certificate::from_working_set(poly, sol, grad, settings)
        }
        Err(Error::NotPsd(_)) => proximal_qp(poly, p, &hess, settings),
        Err(e) => Err(e),
    }
}

/// Maximizes the linear objective `cᵀx`; returns a vertex.
pub fn solve_lp(poly: &Polytope, c: &DVector<f64>, settings: &SolverSettings) -> Result<KktCertificate> {
    check_dim("solve_lp", poly.n_vars(), c.len())?;
    let sol = lp::solve(poly, c, settings)?;
    certificate::from_working_set(poly, sol, c.clone(), settings)
}

/// Proximal-point outer loop for PSD-but-singular Hessians: each inner
/// problem adds `ρ‖x − x_k‖²` and is strictly convex.
fn proximal_qp(
    poly: &Polytope,
    p: &DVector<f64>,
    hess: &DMatrix<f64>,
    settings: &SolverSettings,
) -> Result<KktCertificate> {
    let n = poly.n_vars();
    let eig = hess.clone().symmetric_eigenvalues();
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_eig = eig.iter().cloned().fold(0.0, f64::max);
    if min_eig < -1e-9 * (1.0 + max_eig) {
        return Err(Error::NotPsd(format!("min eigenvalue {min_eig:e}")));
    }
    let rho = 1e-2 * (1.0 + max_eig);
    let reg = hess + DMatrix::identity(n, n) * rho;
    let mut x = poly.anchor().clone();
    for _ in 0..settings.max_iterations {
        let c = -(p + &x * rho);
        let sol = dual::solve(&reg, &c, poly, settings)?;
        let moved = (&sol.x - &x).norm();
        x = sol.x.clone();
        if moved <= 1e-13 * (1.0 + x.norm()) {
            let grad = p - hess * &sol.x;
            return certificate::from_working_set(poly, sol, grad, settings);
        }
    }
    let grad = p - hess * &x;
    let best = certificate::from_point(poly, x, grad, settings, false);
    Err(Error::IterationLimit {
        iterations: settings.max_iterations,
        best: Box::new(best),
    })
}

/// Projects the origin; fails when the polytope is empty.
pub(crate) fn min_norm_point(p: &Polytope) -> Result<DVector<f64>> {
    let n = p.n_vars();
    let h = DMatrix::identity(n, n);
    let c = DVector::zeros(n);
    Ok(dual::solve(&h, &c, p, &SolverSettings::default())?.x)
}
