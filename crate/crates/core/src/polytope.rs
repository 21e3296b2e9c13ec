//! Polyhedral feasible sets `{x | Gx ≤ h, Ax = b}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Default absolute tolerance for deciding that an inequality is active.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-7;

/// Convex polytope with inequality rows `G x ≤ h` and equality rows `A x = b`.
///
/// Simple bounds are ordinary rows of `G`. Equalities are kept separate so
/// that complementarity checks only ever look at inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeDoc", into = "PolytopeDoc")]
pub struct Polytope {
    n_vars: usize,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Minimum-norm feasible point, found by the feasibility check.
    anchor: DVector<f64>,
}

/// Rows of the feasible set that hold with equality at a point.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActiveSet {
    /// Sorted inequality-row indices.
    pub indices: Vec<usize>,
    /// Equality rows exist (and are therefore active everywhere).
    pub includes_equalities: bool,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.indices.binary_search(&row).is_ok()
    }
}

impl Polytope {
    /// Builds and validates a polytope. Runs one feasibility solve.
    pub fn new(
        g: DMatrix<f64>,
        h: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self> {
        let n_vars = g.ncols().max(a.ncols());
        if n_vars == 0 {
            return Err(Error::InvalidPolytope("no decision variables".into()));
        }
        if g.nrows() > 0 || g.ncols() > 0 {
            check_dim("polytope G columns", n_vars, g.ncols())?;
        }
        if a.nrows() > 0 || a.ncols() > 0 {
            check_dim("polytope A columns", n_vars, a.ncols())?;
        }
        check_dim("polytope h length", g.nrows(), h.len())?;
        check_dim("polytope b length", a.nrows(), b.len())?;
        if !(g.iter().chain(h.iter()).chain(a.iter()).chain(b.iter())).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("polytope data"));
        }
        let g = if g.nrows() == 0 { DMatrix::zeros(0, n_vars) } else { g };
        let a = if a.nrows() == 0 { DMatrix::zeros(0, n_vars) } else { a };
        let mut p = Polytope {
            n_vars,
            g,
            h,
            a,
            b,
            anchor: DVector::zeros(0),
        };
        p.anchor = crate::solver::min_norm_point(&p)?;
        Ok(p)
    }

    /// Inequality-only polytope.
    pub fn from_inequalities(g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let n = g.ncols();
        Self::new(g, h, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`. Rows are ordered
    /// `x_0 ≤ u_0, …, x_{n-1} ≤ u_{n-1}, −x_0 ≤ −l_0, …`.
    pub fn box_bounds(lower: &[f64], upper: &[f64]) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        let n = lower.len();
        let mut g = DMatrix::zeros(2 * n, n);
        let mut h = DVector::zeros(2 * n);
        for i in 0..n {
            g[(i, i)] = 1.0;
            h[i] = upper[i];
            g[(n + i, i)] = -1.0;
            h[n + i] = -lower[i];
        }
        Self::from_inequalities(g, h)
    }

    /// Probability simplex `{x ≥ 0, 1ᵀx = 1}`; row `i` is `−x_i ≤ 0`.
    pub fn simplex(n: usize) -> Result<Self> {
        let g = -DMatrix::identity(n, n);
        let h = DVector::zeros(n);
        let a = DMatrix::from_element(1, n, 1.0);
        let b = DVector::from_element(1, 1.0);
        Self::new(g, h, a, b)
    }

    /// A feasible point (the one closest to the origin).
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_ineq(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.a.nrows()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Returns `(Gx − h, Ax − b)`.
    pub fn evaluate_constraints(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim("evaluate_constraints", self.n_vars, x.len())?;
        Ok((&self.g * x - &self.h, &self.a * x - &self.b))
    }

    /// Inequality rows with `|Gᵢx − hᵢ| ≤ tol`.
    ///
    /// Fails if any inequality residual exceeds `+tol` or any equality
    /// residual exceeds `tol` in magnitude.
    pub fn active_set(&self, x: &DVector<f64>, tol: f64) -> Result<ActiveSet> {
        let (ineq, eq) = self.evaluate_constraints(x)?;
        if let Some((row, &r)) = ineq.iter().enumerate().find(|(_, &r)| r > tol) {
            return Err(Error::InfeasiblePoint { row, residual: r });
        }
        if let Some((row, &r)) = eq.iter().enumerate().find(|(_, &r)| r.abs() > tol) {
            return Err(Error::InfeasiblePoint {
                row: self.n_ineq() + row,
                residual: r,
            });
        }
        Ok(self.active_set_unchecked(&ineq, tol))
    }

    pub(crate) fn active_set_unchecked(&self, ineq_residuals: &DVector<f64>, tol: f64) -> ActiveSet {
        ActiveSet {
            indices: ineq_residuals
                .iter()
                .enumerate()
                .filter(|(_, r)| r.abs() <= tol)
                .map(|(i, _)| i)
                .collect(),
            includes_equalities: self.n_eq() > 0,
        }
    }

    /// Stacks active inequality rows followed by all equality rows.
    pub fn active_rows(&self, active: &ActiveSet) -> DMatrix<f64> {
        let ineq = crate::linalg::select_rows(&self.g, &active.indices);
        crate::linalg::vstack(&ineq, &self.a)
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let ineq = &self.g * x - &self.h;
        let eq = &self.a * x - &self.b;
        ineq.iter()
            .map(|r| r.max(0.0))
            .chain(eq.iter().map(|r| r.abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct PolytopeDoc {
    n_vars: usize,
    G: Vec<Vec<f64>>,
    h: Vec<f64>,
    #[serde(default)]
    A: Vec<Vec<f64>>,
    #[serde(default)]
    b: Vec<f64>,
}

fn rows_to_matrix(rows: &[Vec<f64>], n: usize, name: &str) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::InvalidPolytope(format!(
            "row of {name} has {} entries, expected {n}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

impl TryFrom<PolytopeDoc> for Polytope {
    type Error = Error;

    fn try_from(doc: PolytopeDoc) -> Result<Self> {
        let g = rows_to_matrix(&doc.G, doc.n_vars, "G")?;
        let a = rows_to_matrix(&doc.A, doc.n_vars, "A")?;
        Polytope::new(g, DVector::from_vec(doc.h), a, DVector::from_vec(doc.b))
    }
}

impl From<Polytope> for PolytopeDoc {
    fn from(p: Polytope) -> Self {
        PolytopeDoc {
            n_vars: p.n_vars,
            G: matrix_to_rows(&p.g),
            h: p.h.iter().cloned().collect(),
            A: matrix_to_rows(&p.a),
            b: p.b.iter().cloned().collect(),
        }
    }
}
