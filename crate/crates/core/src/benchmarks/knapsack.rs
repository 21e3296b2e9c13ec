use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Bernoulli, StandardNormal, Uniform};

use super::{stream, Benchmark, Objective, ProblemInstance};
use crate::error::{Error, Result};
use crate::polytope::Polytope;

const FEATURES: usize = 16;

/// Item value for signal `(Bo)ᵢ` and noise `εᵢ`: `((Bo/4 + 3)² + 1)·0.4 + ε`.
pub fn knapsack_coefficient(bo: f64, eps: f64) -> f64 {
    ((0.25 * bo + 3.0).powi(2) + 1.0) * 0.4 + eps
}

/// Continuous multi-dimensional knapsack `{0 ≤ x ≤ 1, Wx ≤ b}` with
/// `W ~ U(3, 8)`, `b ~ U(20, 80)` fixed per seed and a Bernoulli(0.5)
/// feature map `B`.
///
/// Rows: `x_i ≤ 1` for all items, then `−x_i ≤ 0`, then the `m` resources.
pub fn gen_knapsack(seed: u64, n: usize, m: usize, n_samples: usize) -> Result<Benchmark> {
    if n == 0 || m == 0 {
        return Err(Error::Config(format!("knapsack needs n, m ≥ 1, got n = {n}, m = {m}")));
    }
    let weight_dist = Uniform::new(3.0, 8.0).expect("valid range");
    let cap_dist = Uniform::new(20.0, 80.0).expect("valid range");
    let coin = Bernoulli::new(0.5).expect("valid probability");
    let noise = Uniform::new(0.5, 1.5).expect("valid range");

    let mut fixed = stream(seed, 0);
    let weights = DMatrix::from_fn(m, n, |_, _| fixed.sample(weight_dist));
    let capacity = DVector::from_fn(m, |_, _| fixed.sample(cap_dist));
    let b = DMatrix::from_fn(n, FEATURES, |_, _| if fixed.sample(coin) { 1.0 } else { 0.0 });

    let mut g = DMatrix::zeros(2 * n + m, n);
    let mut h = DVector::zeros(2 * n + m);
    for i in 0..n {
        g[(i, i)] = 1.0;
        h[i] = 1.0;
        g[(n + i, i)] = -1.0;
    }
    g.rows_mut(2 * n, m).copy_from(&weights);
    h.rows_mut(2 * n, m).copy_from(&capacity);
    let polytope = Polytope::from_inequalities(g, h)?;

    let mut rng = stream(seed, 1);
    let dataset = (0..n_samples)
        .map(|id| {
            let o = DVector::from_fn(FEATURES, |_, _| rng.sample::<f64, _>(StandardNormal));
            let signal = &b * &o;
            let w = DVector::from_fn(n, |i, _| knapsack_coefficient(signal[i], rng.sample(noise)));
            ProblemInstance { id, o, w, q: None }
        })
        .collect();

    Ok(Benchmark {
        name: "knapsack".into(),
        polytope,
        objective: Objective::LinearKnapsack { weights, capacity },
        dataset,
    })
}
