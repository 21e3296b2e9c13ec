//! Small dense linear-algebra helpers shared by the solvers and the
//! differentiation rules.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Stacks the selected rows of `m` into a new matrix.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Vertically concatenates two matrices with the same column count.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let n = top.ncols().max(bottom.ncols());
    DMatrix::from_fn(top.nrows() + bottom.nrows(), n, |i, j| {
        if i < top.nrows() {
            top[(i, j)]
        } else {
            bottom[(i - top.nrows(), j)]
        }
    })
}

/// Orthonormal basis (as columns) of the row space of `rows`.
pub fn row_space_basis(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rows.ncols();
    if rows.nrows() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = rows.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > RANK_RTOL * smax)
        .map(|(i, _)| i)
        .collect();
    DMatrix::from_fn(n, keep.len(), |i, j| v_t[(keep[j], i)])
}

/// Numerical rank of `m`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.clone().singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > RANK_RTOL * smax).count()
}

/// Removes from `v` its component in the column span of the orthonormal `basis`.
pub fn project_out(v: &DVector<f64>, basis: &DMatrix<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return v.clone();
    }
    let coeffs = basis.tr_mul(v);
    v - basis * coeffs
}

/// Minimum-norm least-squares solution of `m x ≈ b`.
pub fn lstsq(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(m.ncols());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, RANK_RTOL * smax.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(m.ncols()))
}

/// Lawson–Hanson nonnegative least squares: `min ‖a x − b‖₂` s.t. `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = a.ncols();
    let mut x = DVector::zeros(k);
    if k == 0 {
        return x;
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0)
        * b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = 1e-13 * scale * k as f64;
    let mut passive = vec![false; k];
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let w = a.tr_mul(&(b - a * &x));
        let candidate = (0..k)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        match candidate {
            Some(j) if w[j] > tol => passive[j] = true,
            _ => break,
        }
        for _ in 0..max_outer {
            let cols: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub = DMatrix::from_fn(a.nrows(), cols.len(), |i, c| a[(i, cols[c])]);
            let s_sub = lstsq(&sub, b);
            let mut s = DVector::zeros(k);
            for (c, &j) in cols.iter().enumerate() {
                s[j] = s_sub[c];
            }
            if cols.iter().all(|&j| s[j] > 0.0) {
                x = s;
                break;
            }
            let mut step = f64::INFINITY;
            for &j in &cols {
                if s[j] <= 0.0 {
                    let denom = x[j] - s[j];
                    if denom > 0.0 {
                        step = step.min(x[j] / denom);
                    } else {
                        step = 0.0;
                    }
                }
            }
            let step = if step.is_finite() { step } else { 0.0 };
            x += (s - &x) * step;
            for &j in &cols {
                if x[j] <= 1e-15 * scale {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
    }
    x
}

/// Splits `g ≈ nonneg · α + free · ν` with `α ≥ 0` and `ν` unrestricted.
///
/// Returns `(α, ν)`.
pub fn nnls_with_free(
    free: &DMatrix<f64>,
    nonneg: &DMatrix<f64>,
    g: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let basis = if free.ncols() > 0 {
        row_space_basis(&free.transpose())
    } else {
        DMatrix::zeros(g.len(), 0)
    };
    let g_perp = project_out(g, &basis);
    let mut nonneg_perp = nonneg.clone();
    for mut col in nonneg_perp.column_iter_mut() {
        let c = project_out(&col.clone_owned(), &basis);
        col.copy_from(&c);
    }
    let alpha = nnls(&nonneg_perp, &g_perp);
    let rest = g - nonneg * &alpha;
    let nu = lstsq(free, &rest);
    (alpha, nu)
}


/// Serde adapter storing a `DVector<f64>` as a plain JSON array.
pub mod serde_dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serde adapter storing a `DMatrix<f64>` as an array of rows.
pub mod serde_dmat {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().cloned().collect()).collect();
        (m.ncols(), rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let (ncols, rows) = <(usize, Vec<Vec<f64>>)>::deserialize(d)?;
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}
