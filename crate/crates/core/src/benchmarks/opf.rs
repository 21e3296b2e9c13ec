use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stream, Benchmark, Objective, ProblemInstance};
use crate::error::{Error, Result};
use crate::linalg::{serde_dmat, serde_dvec};
use crate::polytope::Polytope;

/// Unit rescaling: voltages and currents are divided by this, powers by
/// its square.
pub const OPF_SCALE: f64 = 50.0;

const LINE_ADMITTANCE: f64 = 6.0;
const V_REF: f64 = 350.0;
const V_MIN: f64 = 325.0;
const V_MAX: f64 = 375.0;
const GENERATOR_PROB: f64 = 0.25;
const OBS_NOISE: f64 = 0.5;
const MAX_RESAMPLES: u64 = 1000;

/// Nodal admittance matrix (weighted graph Laplacian) of 6 S lines.
pub fn admittance_matrix(n_nodes: usize, lines: &[(usize, usize)]) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(n_nodes, n_nodes);
    for &(a, b) in lines {
        y[(a, a)] += LINE_ADMITTANCE;
        y[(b, b)] += LINE_ADMITTANCE;
        y[(a, b)] -= LINE_ADMITTANCE;
        y[(b, a)] -= LINE_ADMITTANCE;
    }
    y
}

/// Fixed network data of a DC-OPF benchmark, in rescaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfGrid {
    pub lines: Vec<(usize, usize)>,
    /// Node 0 is the reference generator.
    pub generators: Vec<bool>,
    #[serde(with = "serde_dmat")]
    pub admittance: DMatrix<f64>,
    pub v0: f64,
    /// Maximum consumption per load node, 0 at generators.
    #[serde(with = "serde_dvec")]
    pub demand: DVector<f64>,
    /// Minimum (negative) injection per generator node, 0 at loads.
    #[serde(with = "serde_dvec")]
    pub capacity: DVector<f64>,
    #[serde(with = "serde_dvec")]
    pub line_limit: DVector<f64>,
}

impl OpfGrid {
    /// Samples topology and limits; retries with later sub-seeds until every
    /// sampled limit has the physically required sign.
    pub fn sample(seed: u64, n_nodes: usize) -> Result<Self> {
        for sub in 0..MAX_RESAMPLES {
            if let Some(grid) = Self::try_sample(seed, sub, n_nodes) {
                if sub > 0 {
                    log::info!("opf seed {seed}: resampled {sub} time(s) for valid limits");
                }
                return Ok(grid);
            }
        }
        Err(Error::Infeasible)
    }

    fn try_sample(seed: u64, sub: u64, n: usize) -> Option<Self> {
        let mut rng = stream(seed, 100 + sub);
        let mut edges = BTreeSet::new();
        for i in 1..n {
            let j = rng.random_range(0..i);
            edges.insert((j, i));
        }
        let chords = n.div_ceil(4);
        let max_edges = n * (n - 1) / 2;
        let target = (edges.len() + chords).min(max_edges);
        while edges.len() < target {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let lines: Vec<(usize, usize)> = edges.into_iter().collect();

        let mut generators: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(GENERATOR_PROB)).collect();
        if generators.iter().all(|&g| g) {
            generators[n - 1] = false;
        }

        let admittance = admittance_matrix(n, &lines);

        let demand_dist = Normal::new(8000.0, 2500.0).expect("valid std");
        let cap_dist = Normal::new(-14000.0, 2500.0).expect("valid std");
        let current_dist = Normal::new(25.0, 5.0).expect("valid std");
        let power_scale = OPF_SCALE * OPF_SCALE;
        let mut demand = DVector::zeros(n);
        let mut capacity = DVector::zeros(n);
        for i in 0..n {
            if generators[i] {
                let c: f64 = cap_dist.sample(&mut rng);
                if c >= 0.0 {
                    return None;
                }
                capacity[i] = c / power_scale;
            } else {
                let d: f64 = demand_dist.sample(&mut rng);
                if d <= 0.0 {
                    return None;
                }
                demand[i] = d / power_scale;
            }
        }
        let mut line_limit = DVector::zeros(lines.len());
        for l in line_limit.iter_mut() {
            let c: f64 = current_dist.sample(&mut rng);
            if c <= 0.0 {
                return None;
            }
            *l = c / OPF_SCALE;
        }
        Some(OpfGrid {
            lines,
            generators,
            admittance,
            v0: V_REF / OPF_SCALE,
            demand,
            capacity,
            line_limit,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.generators.len()
    }

    /// Constraint rows over nodal voltages `v`:
    /// voltage bounds, nodal injections `P = −v₀Yv` within
    /// `[capacity, 0]` (generators) or `[0, demand]` (loads), line currents
    /// `6(v_a − v_b)` within `±limit`, and the reference `v_0 = v₀`.
    pub fn polytope(&self) -> Result<Polytope> {
        let n = self.n_nodes();
        let n_lines = self.lines.len();
        let rows = 4 * n + 2 * n_lines;
        let mut g = DMatrix::zeros(rows, n);
        let mut h = DVector::zeros(rows);
        for i in 0..n {
            g[(i, i)] = 1.0;
            h[i] = V_MAX / OPF_SCALE;
            g[(n + i, i)] = -1.0;
            h[n + i] = -V_MIN / OPF_SCALE;
        }
        let injection = &self.admittance * -self.v0;
        for i in 0..n {
            let (lo, hi) = if self.generators[i] {
                (self.capacity[i], 0.0)
            } else {
                (0.0, self.demand[i])
            };
            g.row_mut(2 * n + i).copy_from(&injection.row(i));
            h[2 * n + i] = hi;
            g.row_mut(3 * n + i).copy_from(&(-injection.row(i)));
            h[3 * n + i] = -lo;
        }
        for (k, &(a, b)) in self.lines.iter().enumerate() {
            let r = 4 * n + 2 * k;
            g[(r, a)] = LINE_ADMITTANCE;
            g[(r, b)] = -LINE_ADMITTANCE;
            h[r] = self.line_limit[k];
            g[(r + 1, a)] = -LINE_ADMITTANCE;
            g[(r + 1, b)] = LINE_ADMITTANCE;
            h[r + 1] = self.line_limit[k];
        }
        let mut a = DMatrix::zeros(1, n);
        a[(0, 0)] = 1.0;
        Polytope::new(g, h, a, DVector::from_element(1, self.v0))
    }
}

/// Linearized DC-OPF benchmark maximizing `Σ wᵢPᵢ = −v₀wᵀYv`.
///
/// Load coefficients follow `N(1.2, 1)` and generator coefficients
/// `N(0.8, 0.1)`. Observations concatenate `w`, load demands, generator
/// capacities and line limits, each entry perturbed by `N(0, 0.5)` noise.
pub fn gen_opf(seed: u64, n_nodes: usize, n_samples: usize) -> Result<Benchmark> {
    if n_nodes < 3 {
        return Err(Error::Config(format!("opf needs at least 3 nodes, got {n_nodes}")));
    }
    let grid = OpfGrid::sample(seed, n_nodes)?;
    let polytope = grid.polytope()?;

    let load_dist = Normal::new(1.2, 1.0).expect("valid std");
    let gen_dist = Normal::new(0.8, 0.1).expect("valid std");
    let noise = Normal::new(0.0, OBS_NOISE).expect("valid std");
    let mut features: Vec<f64> = Vec::new();
    features.extend((0..n_nodes).filter(|&i| !grid.generators[i]).map(|i| grid.demand[i]));
    features.extend((0..n_nodes).filter(|&i| grid.generators[i]).map(|i| grid.capacity[i]));
    features.extend(grid.line_limit.iter().copied());

    let mut rng = stream(seed, 1);
    let dataset = (0..n_samples)
        .map(|id| {
            let w = DVector::from_fn(n_nodes, |i, _| {
                if grid.generators[i] {
                    gen_dist.sample(&mut rng)
                } else {
                    load_dist.sample(&mut rng)
                }
            });
            let clean: Vec<f64> = w.iter().chain(features.iter()).copied().collect();
            let o = DVector::from_iterator(clean.len(), clean.into_iter().map(|v| v + noise.sample(&mut rng)));
            ProblemInstance { id, o, w, q: None }
        })
        .collect();

    Ok(Benchmark {
        name: "opf".into(),
        polytope,
        objective: Objective::LinearOpf {
            v0: grid.v0,
            admittance: grid.admittance.clone(),
        },
        dataset,
    })
}
