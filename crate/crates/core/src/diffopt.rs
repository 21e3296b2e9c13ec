//! Vector-Jacobian products of the decision with respect to the prediction.
//!
//! All rules take the upstream gradient `f_x = ∇ₓf(x̂, w)` of the true
//! objective and return `f_xᵀ ∇_ŵ x̂`, i.e. the ascent direction for the
//! prediction `ŵ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::polytope::Polytope;
use crate::solver::KktCertificate;

/// Parameters of the smoothed-projection rule and its regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    /// Weight of the projection-distance penalty `α‖x̂ − ŵ‖²`.
    pub alpha_reg: f64,
    /// Internal-gradient norm at or below which `x̂` is treated as interior.
    pub zero_grad_tol: f64,
    /// Radius of the tangent ball. Kept for completeness; the smoothed
    /// Jacobian does not depend on it.
    pub r: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            alpha_reg: 0.0,
            zero_grad_tol: 1e-9,
            r: 1.0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_reg >= 0.0 && self.alpha_reg.is_finite()) {
            return Err(Error::Config(format!("alpha_reg must be >= 0, got {}", self.alpha_reg)));
        }
        if !(self.zero_grad_tol > 0.0) {
            return Err(Error::Config("zero_grad_tol must be positive".into()));
        }
        if !(self.r > 0.0) {
            return Err(Error::Config("r must be positive".into()));
        }
        Ok(())
    }
}

/// A VJP together with a flag marking results computed outside the
/// conditions that guarantee the Jacobian exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Vjp {
    pub grad: DVector<f64>,
    /// Strict complementarity failed or the KKT system was singular.
    pub heuristic: bool,
}

/// Exact Jacobian of the Euclidean projection: removes from `f_x` its
/// component in the span of the active inequality normals and the
/// equality rows.
pub fn exact_qp_vjp(f_x: &DVector<f64>, cert: &KktCertificate, p: &Polytope) -> Result<Vjp> {
    check_dim("exact_qp_vjp", p.n_vars(), f_x.len())?;
    let rows = p.active_rows(&cert.active);
    let basis = linalg::row_space_basis(&rows);
    Ok(Vjp {
        grad: linalg::project_out(f_x, &basis),
        heuristic: !cert.strict_complementarity,
    })
}

/// Locally smoothed Jacobian: only the internal-gradient direction is
/// annihilated.
///
/// With `f̂ = cert.internal_gradient`, returns `f_x − f̂ (f_xᵀf̂)/‖f̂‖²`, or
/// `f_x` unchanged when `‖f̂‖ ≤ zero_grad_tol`.
pub fn smoothed_vjp(
    f_x: &DVector<f64>,
    cert: &KktCertificate,
    cfg: &SmoothingConfig,
) -> Result<DVector<f64>> {
    let f_hat = &cert.internal_gradient;
    check_dim("smoothed_vjp", f_hat.len(), f_x.len())?;
    let norm2 = f_hat.norm_squared();
    if norm2.sqrt() <= cfg.zero_grad_tol {
        return Ok(f_x.clone());
    }
    Ok(f_x - f_hat * (f_x.dot(f_hat) / norm2))
}

/// Implicit differentiation of the KKT system restricted to the active rows.
///
/// `hessian` is `∇²ₓₓf(x̂, ŵ)` (n×n) and `cross_jacobian` is `∇_ŵ∇ₓf(x̂, ŵ)`
/// (n×u). One adjoint solve of `[H Nᵀ; N 0] y = [f_x; 0]` gives the
/// result `−cross_jacobianᵀ y_x`. Singular systems fall back to a
/// least-squares solve and are flagged heuristic.
pub fn implicit_kkt_vjp(
    f_x: &DVector<f64>,
    cert: &KktCertificate,
    p: &Polytope,
    hessian: &DMatrix<f64>,
    cross_jacobian: &DMatrix<f64>,
) -> Result<Vjp> {
    let n = p.n_vars();
    check_dim("implicit_kkt_vjp f_x", n, f_x.len())?;
    check_dim("implicit_kkt_vjp hessian rows", n, hessian.nrows())?;
    check_dim("implicit_kkt_vjp hessian cols", n, hessian.ncols())?;
    check_dim("implicit_kkt_vjp cross rows", n, cross_jacobian.nrows())?;

    let rows = p.active_rows(&cert.active);
    let k = rows.nrows();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(hessian);
    kkt.view_mut((n, 0), (k, n)).copy_from(&rows);
    kkt.view_mut((0, n), (n, k)).copy_from(&rows.transpose());
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(f_x);

    let scale = kkt.amax().max(f64::MIN_POSITIVE) * rhs.amax().max(f64::MIN_POSITIVE);
    let direct = kkt.clone().lu().solve(&rhs).filter(|y| {
        y.iter().all(|v| v.is_finite()) && (&kkt * y - &rhs).amax() <= 1e-10 * scale.max(1.0)
    });
    let singular = direct.is_none() || linalg::rank(&kkt) < n + k;
    let y = match direct {
        Some(y) if !singular => y,
        _ => linalg::lstsq(&kkt, &rhs),
    };
    let y_x = y.rows(0, n).clone_owned();
    Ok(Vjp {
        grad: -cross_jacobian.tr_mul(&y_x),
        heuristic: singular || !cert.strict_complementarity,
    })
}

/// Ascent contribution `2α(x̂ − ŵ)` of the penalty `−α‖x̂ − ŵ‖²`.
pub fn pdr_gradient(
    w_hat: &DVector<f64>,
    cert: &KktCertificate,
    cfg: &SmoothingConfig,
) -> Result<DVector<f64>> {
    check_dim("pdr_gradient", cert.x_star.len(), w_hat.len())?;
    Ok((&cert.x_star - w_hat) * (2.0 * cfg.alpha_reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{project, SolverSettings};
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn unit_box(n: usize) -> Polytope {
        Polytope::box_bounds(&vec![0.0; n], &vec![1.0; n]).unwrap()
    }

    fn cert_for(p: &Polytope, w: &[f64]) -> KktCertificate {
        project(p, &v(w), &SolverSettings::default()).unwrap()
    }

    #[test]
    fn exact_interior_is_identity() {
        let p = unit_box(2);
        let c = cert_for(&p, &[0.4, 0.6]);
        let out = exact_qp_vjp(&v(&[0.7, -0.3]), &c, &p).unwrap();
        assert_relative_eq!(out.grad, v(&[0.7, -0.3]), epsilon = 1e-15);
        assert!(!out.heuristic);
    }

    #[test]
    fn exact_single_active_normal() {
        // active row x₁ ≤ 1 has normal (0, 1)
        let p = unit_box(2);
        let c = cert_for(&p, &[0.5, 3.0]);
        assert_eq!(c.active.indices, vec![1]);
        let out = exact_qp_vjp(&v(&[0.3, -1.7]), &c, &p).unwrap();
        assert_relative_eq!(out.grad, v(&[0.3, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn exact_full_span_vertex_is_zero() {
        let p = unit_box(3);
        let c = cert_for(&p, &[2.0, -1.0, 5.0]);
        assert_eq!(c.active.len(), 3);
        let out = exact_qp_vjp(&v(&[1.0, 2.0, -3.0]), &c, &p).unwrap();
        assert!(out.grad.amax() < 1e-15);
    }

    #[test]
    fn exact_flags_weakly_active_rows() {
        // ŵ exactly on the face: row active with zero multiplier
        let p = unit_box(2);
        let c = cert_for(&p, &[0.5, 1.0]);
        assert!(!c.strict_complementarity);
        let out = exact_qp_vjp(&v(&[1.0, 1.0]), &c, &p).unwrap();
        assert!(out.heuristic);
    }

    #[test]
    fn smoothed_axis_projection() {
        let p = unit_box(2);
        let mut c = cert_for(&p, &[1.5, 0.5]);
        assert_relative_eq!(c.internal_gradient, v(&[1.0, 0.0]), epsilon = 1e-12);
        c.internal_gradient = v(&[1.0, 0.0]);
        let out = smoothed_vjp(&v(&[0.7, -0.2]), &c, &SmoothingConfig::default()).unwrap();
        assert_relative_eq!(out, v(&[0.0, -0.2]), epsilon = 1e-15);
    }

    #[test]
    fn smoothed_collinear_is_zero() {
        let p = unit_box(3);
        let c = cert_for(&p, &[2.0, -1.0, 0.5]);
        for scale in [-3.0, 0.5, 7.0] {
            let f_x = &c.internal_gradient * scale;
            let out = smoothed_vjp(&f_x, &c, &SmoothingConfig::default()).unwrap();
            assert!(out.amax() < 1e-14);
        }
    }

    #[test]
    fn smoothed_interior_is_identity() {
        let p = unit_box(2);
        let c = cert_for(&p, &[0.3, 0.3]);
        let out = smoothed_vjp(&v(&[1.0, -2.0]), &c, &SmoothingConfig::default()).unwrap();
        assert_eq!(out, v(&[1.0, -2.0]));
    }

    #[test]
    fn smoothed_ignores_radius() {
        let p = unit_box(2);
        let c = cert_for(&p, &[1.5, 2.5]);
        let f_x = v(&[0.3, 0.9]);
        let a = smoothed_vjp(&f_x, &c, &SmoothingConfig { r: 0.01, ..Default::default() }).unwrap();
        let b = smoothed_vjp(&f_x, &c, &SmoothingConfig { r: 100.0, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pdr_cases() {
        let p = unit_box(2);
        let inside = cert_for(&p, &[0.2, 0.9]);
        let cfg = SmoothingConfig { alpha_reg: 0.1, ..Default::default() };
        assert!(pdr_gradient(&v(&[0.2, 0.9]), &inside, &cfg).unwrap().amax() < 1e-15);

        let w = v(&[2.0, -0.5]);
        let outside = cert_for(&p, w.as_slice());
        let zero = pdr_gradient(&w, &outside, &SmoothingConfig::default()).unwrap();
        assert_eq!(zero.amax(), 0.0);

        // f̂ = 2(ŵ − x̂) so the penalty gradient is −α f̂.
        let g = pdr_gradient(&w, &outside, &cfg).unwrap();
        assert_relative_eq!(g, &outside.internal_gradient * -0.1, epsilon = 1e-14);
    }

    #[test]
    fn implicit_unconstrained_is_half_identity() {
        // max pᵀx − xᵀx over a huge box: x* = p/2, Jacobian I/2.
        let p = Polytope::box_bounds(&[-100.0; 3], &[100.0; 3]).unwrap();
        let c = crate::solver::solve_qp(
            &p,
            &v(&[1.0, -2.0, 0.5]),
            &DMatrix::identity(3, 3),
            1.0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(c.active.is_empty());
        let h = DMatrix::identity(3, 3) * -2.0;
        let cross = DMatrix::identity(3, 3);
        let f_x = v(&[0.4, 1.0, -2.0]);
        let out = implicit_kkt_vjp(&f_x, &c, &p, &h, &cross).unwrap();
        assert_relative_eq!(out.grad, &f_x / 2.0, epsilon = 1e-14);
        assert!(!out.heuristic);
    }

    #[test]
    fn implicit_fully_active_is_zero() {
        // max px − x² s.t. x ≤ 0 with p > 0 pins x* = 0.
        let g = DMatrix::from_row_slice(1, 1, &[1.0]);
        let p = Polytope::from_inequalities(g, v(&[0.0])).unwrap();
        let c = crate::solver::solve_qp(&p, &v(&[1.5]), &DMatrix::identity(1, 1), 1.0, &SolverSettings::default())
            .unwrap();
        assert_relative_eq!(c.x_star[0], 0.0, epsilon = 1e-15);
        let out = implicit_kkt_vjp(&v(&[3.0]), &c, &p, &DMatrix::from_element(1, 1, -2.0), &DMatrix::identity(1, 1))
            .unwrap();
        assert!(out.grad.amax() < 1e-15);
    }

    #[test]
    fn implicit_projection_matches_exact() {
        let p = Polytope::simplex(4).unwrap();
        let c = cert_for(&p, &[0.9, -0.2, 0.6, 0.1]);
        let f_x = v(&[0.3, -1.0, 2.0, 0.5]);
        let exact = exact_qp_vjp(&f_x, &c, &p).unwrap();
        let h = DMatrix::identity(4, 4) * -2.0;
        let cross = DMatrix::identity(4, 4) * 2.0;
        let imp = implicit_kkt_vjp(&f_x, &c, &p, &h, &cross).unwrap();
        assert_relative_eq!(imp.grad, exact.grad, epsilon = 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let p = unit_box(2);
        let c = cert_for(&p, &[0.5, 0.5]);
        assert!(exact_qp_vjp(&v(&[1.0]), &c, &p).is_err());
        assert!(smoothed_vjp(&v(&[1.0]), &c, &SmoothingConfig::default()).is_err());
        assert!(pdr_gradient(&v(&[1.0, 2.0, 3.0]), &c, &SmoothingConfig::default()).is_err());
    }
}
