#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pno_core::Polytope;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random polytope with `m` unit-normal inequality rows around an interior
/// point and `k` random equality rows through it.
///
/// Bounded when `bounded` is set (adds `|x_i| ≤ 3`, counted in `m`).
pub fn random_polytope(n: usize, m: usize, k: usize, bounded: bool, rng: &mut ChaCha8Rng) -> Polytope {
    let center = gaussian(n, rng) * 0.3;
    let n_box = if bounded { 2 * n } else { 0 };
    assert!(m >= n_box, "m = {m} too small for box rows");
    let n_rand = m - n_box;
    let mut g = DMatrix::zeros(m, n);
    let mut h = DVector::zeros(m);
    for r in 0..n_rand {
        let normal = gaussian(n, rng).normalize();
        g.row_mut(r).copy_from(&normal.transpose());
        h[r] = normal.dot(&center) + rng.random_range(0.05..1.0);
    }
    for i in 0..n_box / 2 {
        g[(n_rand + 2 * i, i)] = 1.0;
        h[n_rand + 2 * i] = 3.0;
        g[(n_rand + 2 * i + 1, i)] = -1.0;
        h[n_rand + 2 * i + 1] = 3.0;
    }
    let a = DMatrix::from_fn(k, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = &a * &center;
    Polytope::new(g, h, a, b).expect("constructed around an interior point")
}

/// Random dimensions with `n ≤ n_max`, `m ≤ m_max` and at most two
/// equalities (fewer than `n`).
pub fn random_shape(n_max: usize, m_max: usize, rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    let n = rng.random_range(2..=n_max);
    let m = rng.random_range(1..=m_max);
    let k = rng.random_range(0..=2usize.min(n - 1));
    (n, m, k)
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale < 1e-12 {
        (a - b).norm()
    } else {
        (a - b).norm() / scale
    }
}
