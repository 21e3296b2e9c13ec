//! Dual active-set method (Goldfarb–Idnani) for strictly convex QPs
//!
//! ```text
//! minimize ½ xᵀHx + cᵀx   s.t.  Gx ≤ h,  Ax = b
//! ```
//!
//! Constraints are written as `aᵀx − β ≥ 0`. Starting from the
//! unconstrained minimizer, violated constraints are added one at a time
//! while dual feasibility is maintained; the working set stays linearly
//! independent throughout. Reported multipliers use the maximization
//! convention `−(Hx + c) = Σ αᵢ Gᵢᵀ + Aᵀν`.

use nalgebra::{DMatrix, DVector};

use super::certificate::{self, WorkingSetSolution};
use super::SolverSettings;
use crate::error::{Error, Result};
use crate::polytope::Polytope;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Row {
    Ineq(usize),
    Eq { row: usize, sign: f64 },
}

struct Work {
    row: Row,
    normal: DVector<f64>,
    beta: f64,
    u: f64,
}

struct State<'a> {
    linv: DMatrix<f64>,
    x: DVector<f64>,
    work: Vec<Work>,
    iterations: usize,
    settings: &'a SolverSettings,
}

enum AddOutcome {
    Added,
    Redundant,
}

pub(crate) fn solve(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    p: &Polytope,
    settings: &SolverSettings,
) -> Result<WorkingSetSolution> {
    let n = p.n_vars();
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPsd("Hessian is not positive definite".into()))?;
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotPsd("singular Cholesky factor".into()))?;
    let x = -chol.solve(c);
    let mut st = State {
        linv,
        x,
        work: Vec::new(),
        iterations: 0,
        settings,
    };

    for j in 0..p.n_eq() {
        let a = p.a().row(j).transpose();
        let s = a.dot(&st.x) - p.b()[j];
        let sign = if s > 0.0 { -1.0 } else { 1.0 };
        let normal = a * sign;
        let beta = p.b()[j] * sign;
        match st.add(Row::Eq { row: j, sign }, normal, beta) {
            Ok(_) => {}
            Err(e) => return Err(st.wrap(e, h, c, p)),
        }
    }

    let row_norms: Vec<f64> = p
        .g()
        .row_iter()
        .map(|r| r.norm().max(f64::MIN_POSITIVE))
        .collect();
    loop {
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..p.n_ineq() {
            if st.work.iter().any(|w| w.row == Row::Ineq(i)) {
                continue;
            }
            let slack = p.h()[i] - p.g().row(i).dot(&st.x.transpose());
            let scaled = slack / row_norms[i];
            let threshold = -1e-11 * (1.0 + p.h()[i].abs() / row_norms[i]);
            if scaled < threshold && worst.is_none_or(|(_, w)| scaled < w) {
                worst = Some((i, scaled));
            }
        }
        let Some((i, _)) = worst else { break };
        let normal = -p.g().row(i).transpose();
        let beta = -p.h()[i];
        if let Err(e) = st.add(Row::Ineq(i), normal, beta) {
            return Err(st.wrap(e, h, c, p));
        }
    }

    st.polish(h, c);
    Ok(st.solution())
}

impl State<'_> {
    fn basis(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.x.len();
        let k = self.work.len();
        if k == 0 {
            return (DMatrix::zeros(n, 0), DMatrix::zeros(0, 0));
        }
        let nmat = DMatrix::from_fn(n, k, |i, j| self.work[j].normal[i]);
        let b = &self.linv * nmat;
        let qr = b.qr();
        (qr.q(), qr.r())
    }

    fn add(&mut self, row: Row, normal: DVector<f64>, beta: f64) -> Result<AddOutcome> {
        let is_eq = matches!(row, Row::Eq { .. });
        let mut u_p = 0.0;
        loop {
            self.iterations += 1;
            if self.iterations > self.settings.max_iterations {
                return Err(Error::IterationLimit {
                    iterations: self.settings.max_iterations,
                    best: Box::new(placeholder(self.x.clone())),
                });
            }
            let (q1, r) = self.basis();
            let d = &self.linv * &normal;
            let dq = q1.tr_mul(&d);
            let rvec = if dq.is_empty() {
                DVector::zeros(0)
            } else {
                r.solve_upper_triangular(&dq).unwrap_or_else(|| DVector::zeros(dq.len()))
            };
            let zr = &d - &q1 * &dq;
            let z = self.linv.tr_mul(&zr);

            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, w) in self.work.iter().enumerate() {
                if matches!(w.row, Row::Eq { .. }) {
                    continue;
                }
                if rvec[j] > 1e-14 * (1.0 + rvec.amax()) {
                    let ratio = w.u / rvec[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            let s = normal.dot(&self.x) - beta;
            let zn2 = zr.norm_squared();
            let dependent = zr.norm() <= 1e-12 * d.norm().max(f64::MIN_POSITIVE);
            let t2 = if dependent { f64::INFINITY } else { (-s / zn2).max(0.0) };

            if t2.is_infinite() {
                if is_eq && s.abs() <= 1e-10 * (1.0 + beta.abs()) {
                    return Ok(AddOutcome::Redundant);
                }
                let Some(k) = drop else {
                    return Err(Error::Infeasible);
                };
                for (j, w) in self.work.iter_mut().enumerate() {
                    w.u -= t1 * rvec[j];
                }
                u_p += t1;
                self.work.remove(k);
                continue;
            }

            let t = t1.min(t2);
            self.x += &z * t;
            for (j, w) in self.work.iter_mut().enumerate() {
                w.u -= t * rvec[j];
            }
            u_p += t;
            if t2 <= t1 {
                self.work.push(Work {
                    row,
                    normal,
                    beta,
                    u: u_p,
                });
                return Ok(AddOutcome::Added);
            }
            let k = drop.expect("t1 finite implies a drop candidate");
            self.work.remove(k);
        }
    }

    /// Re-solves the equality-constrained problem on the final working set,
    /// which removes drift accumulated over the step updates.
    fn polish(&mut self, h: &DMatrix<f64>, c: &DVector<f64>) {
        if self.work.is_empty() {
            return;
        }
        let (q1, r) = self.basis();
        let x0 = -h.clone().cholesky().expect("factored earlier").solve(c);
        let rhs = DVector::from_iterator(
            self.work.len(),
            self.work.iter().map(|w| w.beta - w.normal.dot(&x0)),
        );
        let Some(y) = r.tr_solve_upper_triangular(&rhs) else { return };
        let Some(mu) = r.solve_upper_triangular(&y) else { return };
        let x = x0 + self.linv.tr_mul(&(&q1 * &y));
        let dual_ok = self
            .work
            .iter()
            .zip(mu.iter())
            .all(|(w, &m)| matches!(w.row, Row::Eq { .. }) || m >= -1e-10 * (1.0 + mu.amax()));
        if !dual_ok || !x.iter().all(|v| v.is_finite()) {
            return;
        }
        self.x = x;
        for (w, &m) in self.work.iter_mut().zip(mu.iter()) {
            w.u = if matches!(w.row, Row::Eq { .. }) { m } else { m.max(0.0) };
        }
    }

    fn solution(&self) -> WorkingSetSolution {
        let mut ineq = Vec::new();
        let mut eq = Vec::new();
        for w in &self.work {
            match w.row {
                Row::Ineq(i) => ineq.push((i, w.u)),
                Row::Eq { row, sign } => eq.push((row, -sign * w.u)),
            }
        }
        WorkingSetSolution {
            x: self.x.clone(),
            ineq,
            eq,
        }
    }

    fn wrap(&self, e: Error, h: &DMatrix<f64>, c: &DVector<f64>, p: &Polytope) -> Error {
        match e {
            Error::IterationLimit { iterations, .. } => {
                let grad = -(h * &self.x + c);
                let best = certificate::from_point(p, self.x.clone(), grad, self.settings, false);
                Error::IterationLimit {
                    iterations,
                    best: Box::new(best),
                }
            }
            other => other,
        }
    }
}

fn placeholder(x: DVector<f64>) -> super::KktCertificate {
    let n = x.len();
    super::KktCertificate {
        x_star: x,
        active: Default::default(),
        ineq_multipliers: DVector::zeros(0),
        eq_multipliers: DVector::zeros(0),
        internal_gradient: DVector::zeros(n),
        strict_complementarity: false,
        kkt_residual: f64::INFINITY,
        rank_deficient: false,
        converged: false,
    }
}
