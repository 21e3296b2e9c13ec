//! Vertex-following active-set method for `max cᵀx` over a polytope.
//!
//! Starts from the polytope's anchor point, walks to a vertex, then
//! exchanges one working row per iteration. Rows leave by the most negative
//! multiplier; after a run of degenerate pivots the method switches to
//! Bland's smallest-index rule, so degenerate vertices cannot cycle.

use nalgebra::{DMatrix, DVector};

use super::certificate::{self, WorkingSetSolution};
use super::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg;
use crate::polytope::Polytope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Row {
    Eq(usize),
    Ineq(usize),
}

struct Walker<'a> {
    p: &'a Polytope,
    x: DVector<f64>,
    work: Vec<Row>,
    row_norms: Vec<f64>,
}

impl Walker<'_> {
    fn normal(&self, r: Row) -> DVector<f64> {
        match r {
            Row::Eq(j) => self.p.a().row(j).transpose(),
            Row::Ineq(i) => self.p.g().row(i).transpose(),
        }
    }

    fn rhs(&self, r: Row) -> f64 {
        match r {
            Row::Eq(j) => self.p.b()[j],
            Row::Ineq(i) => self.p.h()[i],
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.work.len(), self.p.n_vars());
        for (k, &r) in self.work.iter().enumerate() {
            match r {
                Row::Eq(j) => m.row_mut(k).copy_from(&self.p.a().row(j)),
                Row::Ineq(i) => m.row_mut(k).copy_from(&self.p.g().row(i)),
            }
        }
        m
    }

    /// Longest feasible step along `d`; returns `(t, blocking row)`.
    fn ratio_test(&self, d: &DVector<f64>) -> Option<(f64, usize)> {
        let dn = d.norm();
        let rates = self.p.g() * d;
        let slacks = self.p.h() - self.p.g() * &self.x;
        let mut in_work = vec![false; self.p.n_ineq()];
        for r in &self.work {
            if let Row::Ineq(i) = *r {
                in_work[i] = true;
            }
        }
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.p.n_ineq() {
            if in_work[i] || rates[i] <= 1e-12 * self.row_norms[i] * dn {
                continue;
            }
            let t = slacks[i].max(0.0) / rates[i];
            // strict `<` keeps the smallest index among ties
            if best.is_none_or(|(bt, _)| t < bt - 1e-14 * (1.0 + bt.abs())) {
                best = Some((t, i));
            }
        }
        best
    }

    /// Re-solves the vertex equations so `x` sits exactly on the working rows.
    fn snap(&mut self) {
        let m = self.matrix();
        let rhs = DVector::from_iterator(self.work.len(), self.work.iter().map(|&r| self.rhs(r)));
        let resid = &rhs - &m * &self.x;
        let corr = min_norm(&m, &resid).unwrap_or_else(|| linalg::lstsq(&m, &resid));
        self.x += corr;
    }
}

/// `Mᵀ(MMᵀ)⁻¹b` for a full-row-rank `M`.
fn min_norm(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let y = (m * m.transpose()).cholesky()?.solve(b);
    Some(m.tr_mul(&y))
}

/// Bland's rule takes over after this many consecutive degenerate pivots.
const DEGENERATE_RUN: usize = 8;

pub(crate) fn solve(p: &Polytope, c: &DVector<f64>, settings: &SolverSettings) -> Result<WorkingSetSolution> {
    let n = p.n_vars();
    let mut w = Walker {
        p,
        x: p.anchor().clone(),
        work: Vec::new(),
        row_norms: p.g().row_iter().map(|r| r.norm()).collect(),
    };
    // orthonormalized copies of the accepted rows
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    let mut accept = |w: &mut Walker, r: Row| {
        let mut v = w.normal(r);
        let scale = v.norm();
        for q in &ortho {
            v -= q * q.dot(&v);
        }
        let norm = v.norm();
        if norm > 1e-9 * scale {
            ortho.push(v / norm);
            w.work.push(r);
        }
    };
    for j in 0..p.n_eq() {
        accept(&mut w, Row::Eq(j));
    }
    let res = p.g() * &w.x - p.h();
    for i in 0..p.n_ineq() {
        if w.work.len() == n {
            break;
        }
        if res[i].abs() <= 1e-9 * (1.0 + p.h()[i].abs()) {
            accept(&mut w, Row::Ineq(i));
        }
    }

    let cscale = c.amax().max(f64::MIN_POSITIVE);
    let mut iterations = 0usize;

    // Walk to a vertex, never decreasing the objective.
    while w.work.len() < n {
        iterations += 1;
        if iterations > settings.max_iterations {
            return Err(limit(p, &w, c, settings));
        }
        let m = w.matrix();
        let mut d = match min_norm(&m, &(&m * c)) {
            Some(back) if m.nrows() > 0 => c - back,
            _ if m.nrows() == 0 => c.clone(),
            _ => linalg::project_out(c, &linalg::row_space_basis(&m)),
        };
        let improving = d.norm() > 1e-12 * cscale;
        if !improving {
            let basis = linalg::row_space_basis(&m);
            let e = (0..n)
                .map(|j| {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    linalg::project_out(&e, &basis)
                })
                .find(|v| v.norm() > 1e-6)
                .expect("working set has fewer than n independent rows");
            d = e;
        }
        let step = match w.ratio_test(&d) {
            Some(s) => Some(s),
            None if !improving => {
                d = -d;
                w.ratio_test(&d)
            }
            None => None,
        };
        let Some((t, i)) = step else {
            return Err(Error::Unbounded);
        };
        w.x += &d * t;
        w.work.push(Row::Ineq(i));
        w.snap();
    }

    let mut degenerate = 0usize;
    loop {
        iterations += 1;
        if iterations > settings.max_iterations {
            return Err(limit(p, &w, c, settings));
        }
        let m = w.matrix();
        let lu_t = m.transpose().lu();
        let lu = m.lu();
        let singular = || Error::Config("singular vertex basis".into());
        let lambda = lu_t.solve(c).ok_or_else(singular)?;
        // exact vertex of the current basis
        let rhs = DVector::from_iterator(n, w.work.iter().map(|&r| w.rhs(r)));
        w.x = lu.solve(&rhs).ok_or_else(singular)?;
        let tol = 1e-11 * cscale;
        let candidates = w
            .work
            .iter()
            .enumerate()
            .filter(|(k, r)| matches!(r, Row::Ineq(_)) && lambda[*k] < -tol);
        let leave = if degenerate >= DEGENERATE_RUN {
            candidates.min_by_key(|(_, r)| **r).map(|(k, _)| k)
        } else {
            candidates
                .min_by(|a, b| lambda[a.0].total_cmp(&lambda[b.0]).then(a.1.cmp(b.1)))
                .map(|(k, _)| k)
        };
        let Some(k) = leave else {
            let mut ineq = Vec::new();
            let mut eq = Vec::new();
            for (idx, r) in w.work.iter().enumerate() {
                match *r {
                    Row::Ineq(i) => ineq.push((i, lambda[idx].max(0.0))),
                    Row::Eq(j) => eq.push((j, lambda[idx])),
                }
            }
            return Ok(WorkingSetSolution { x: w.x, ineq, eq });
        };
        // moves off row k, keeps the others tight
        let mut e = DVector::zeros(n);
        e[k] = -1.0;
        let d = lu.solve(&e).ok_or_else(singular)?;
        let Some((t, i)) = w.ratio_test(&d) else {
            return Err(Error::Unbounded);
        };
        if t * d.norm() <= 1e-12 * (1.0 + w.x.norm()) {
            degenerate += 1;
        } else {
            degenerate = 0;
        }
        w.x += &d * t;
        w.work[k] = Row::Ineq(i);
    }
}

fn limit(p: &Polytope, w: &Walker, c: &DVector<f64>, settings: &SolverSettings) -> Error {
    let best = certificate::from_point(p, w.x.clone(), c.clone(), settings, false);
    Error::IterationLimit {
        iterations: settings.max_iterations,
        best: Box::new(best),
    }
}
