//! Projected-gradient ascent for smooth concave objectives.

use nalgebra::DVector;

use super::certificate::{self, KktCertificate};
use super::{project, SolverSettings};
use crate::error::{check_dim, Error, Result};
use crate::polytope::Polytope;

/// Maximizes a concave `objective` (returning value and gradient) over `p`.
///
/// Uses Barzilai–Borwein step lengths with Armijo backtracking along the
/// projected direction; stops once `‖P(x + ∇f) − x‖₂ ≤ kkt_tol`.
/// Multipliers are recovered by nonnegative least squares on the rows
/// active at the final point.
///
/// A trial point whose value exceeds the linear model `f(x) + τ∇fᵀd` is
/// reported as [`Error::NotConcave`].
pub fn solve_concave<F>(
    p: &Polytope,
    objective: F,
    x0: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<KktCertificate>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    check_dim("solve_concave", p.n_vars(), x0.len())?;
    let mut x = project(p, x0, settings)?.x_star;
    let (mut f, mut g) = eval(&objective, &x, p.n_vars())?;
    let mut step = 1.0;
    let mut converged = false;

    for _ in 0..settings.max_iterations {
        let measure = (project(p, &(&x + &g), settings)?.x_star - &x).norm();
        if measure <= settings.kkt_tol {
            converged = true;
            break;
        }
        let d = project(p, &(&x + &g * step), settings)?.x_star - &x;
        let slope = g.dot(&d);
        if slope <= 0.0 {
            // projection round-off dominates; nothing left to gain
            converged = measure <= settings.kkt_tol.sqrt();
            break;
        }
        let slack = 1e-10 * (1.0 + f.abs());
        let mut tau = 1.0;
        let accepted = loop {
            let xn = &x + &d * tau;
            let (fn_, gn) = eval(&objective, &xn, p.n_vars())?;
            if fn_ > f + tau * slope + slack {
                return Err(Error::NotConcave(format!(
                    "value {fn_} exceeds linear upper bound {} along an ascent step",
                    f + tau * slope
                )));
            }
            if fn_ >= f + settings.armijo * tau * slope {
                break Some((xn, fn_, gn));
            }
            tau *= settings.backtrack;
            if tau < settings.min_step {
                break None;
            }
        };
        let Some((xn, fn_, gn)) = accepted else {
            converged = measure <= settings.kkt_tol.sqrt();
            break;
        };
        let s = &xn - &x;
        let curvature = -s.dot(&(&gn - &g));
        step = if curvature > 0.0 {
            (s.norm_squared() / curvature).clamp(1e-10, 1e10)
        } else {
            (step * 2.0).min(1e10)
        };
        x = xn;
        f = fn_;
        g = gn;
    }

    let cert = certificate::from_point(p, x, g, settings, converged);
    if converged {
        Ok(cert)
    } else {
        Err(Error::IterationLimit {
            iterations: settings.max_iterations,
            best: Box::new(cert),
        })
    }
}

fn eval<F>(objective: &F, x: &DVector<f64>, n: usize) -> Result<(f64, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let (f, g) = objective(x);
    check_dim("objective gradient", n, g.len())?;
    if !f.is_finite() || !g.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("objective evaluation"));
    }
    Ok((f, g))
}
