//! Benchmark families: objectives, seeded generators and dataset dumps.

mod csv_prices;
mod knapsack;
mod opf;
mod portfolio;

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{serde_dmat, serde_dvec};
use crate::polytope::Polytope;
use crate::solver::{self, KktCertificate, SolverSettings};

pub use csv_prices::{load_price_table, PriceTable};
pub use knapsack::{gen_knapsack, knapsack_coefficient};
pub use opf::{admittance_matrix, gen_opf, OpfGrid, OPF_SCALE};
pub use portfolio::{gen_portfolio, PortfolioSource, PortfolioVariant};

/// One `(o, w)` sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: usize,
    /// Observation features.
    #[serde(with = "serde_dvec")]
    pub o: DVector<f64>,
    /// True native parameters (`p` for portfolios, `w` for OPF/knapsack).
    #[serde(with = "serde_dvec")]
    pub w: DVector<f64>,
    /// Covariance matrix for portfolio instances.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_dmat")]
    pub q: Option<DMatrix<f64>>,
}

mod opt_dmat {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(serde::Serialize, serde::Deserialize)]
    struct Wrap(#[serde(with = "crate::linalg::serde_dmat")] DMatrix<f64>);

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.serialize_some(&Wrap(m.clone())),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

/// True objective `f(x, w)` of a benchmark family, with its fixed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "snake_case")]
pub enum Objective {
    /// `pᵀx − λ xᵀQx`.
    QuadraticPortfolio { lambda: f64 },
    /// `−log Σ exp(−pᵢxᵢ)`.
    LogSumExpPortfolio,
    /// `−v₀ wᵀ(Yv)`.
    LinearOpf {
        v0: f64,
        #[serde(with = "serde_dmat")]
        admittance: DMatrix<f64>,
    },
    /// `wᵀx`.
    LinearKnapsack {
        #[serde(with = "serde_dmat")]
        weights: DMatrix<f64>,
        #[serde(with = "serde_dvec")]
        capacity: DVector<f64>,
    },
}

impl Objective {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Objective::QuadraticPortfolio { .. } => "quadratic_portfolio",
            Objective::LogSumExpPortfolio => "logsumexp_portfolio",
            Objective::LinearOpf { .. } => "linear_opf",
            Objective::LinearKnapsack { .. } => "linear_knapsack",
        }
    }

    /// Linear in `x` for every parameter value.
    pub fn is_linear(&self) -> bool {
        match self {
            Objective::QuadraticPortfolio { lambda } => *lambda == 0.0,
            Objective::LogSumExpPortfolio => false,
            Objective::LinearOpf { .. } | Objective::LinearKnapsack { .. } => true,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Objective::QuadraticPortfolio { lambda } => Some(*lambda),
            _ => None,
        }
    }
}

/// A feasible set, an objective family and a dataset of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub polytope: Polytope,
    pub objective: Objective,
    pub dataset: Vec<ProblemInstance>,
}

fn covariance(inst: &ProblemInstance) -> Result<&DMatrix<f64>> {
    inst.q
        .as_ref()
        .ok_or_else(|| Error::Config(format!("portfolio instance {} has no covariance", inst.id)))
}

impl Benchmark {
    pub fn n_vars(&self) -> usize {
        self.polytope.n_vars()
    }

    pub fn obs_dim(&self) -> usize {
        self.dataset.first().map_or(0, |i| i.o.len())
    }

    /// Length of the native parameter vector predicted by the true-problem
    /// and MSE methods.
    pub fn param_dim(&self) -> usize {
        self.n_vars()
    }

    /// Value and gradient in `x` of the objective with parameters `w`;
    /// `inst` supplies per-instance fixed data such as the covariance.
    pub fn objective_with(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
        inst: &ProblemInstance,
    ) -> Result<(f64, DVector<f64>)> {
        let n = self.n_vars();
        check_dim("objective x", n, x.len())?;
        check_dim("objective parameters", self.param_dim(), w.len())?;
        Ok(match &self.objective {
            Objective::QuadraticPortfolio { lambda } => {
                let q = covariance(inst)?;
                let qx = q * x;
                let value = w.dot(x) - lambda * x.dot(&qx);
                (value, w - qx * (2.0 * lambda))
            }
            Objective::LogSumExpPortfolio => logsumexp(x, w),
            Objective::LinearOpf { v0, admittance } => {
                let c = admittance.tr_mul(w) * -v0;
                (c.dot(x), c)
            }
            Objective::LinearKnapsack { .. } => (w.dot(x), w.clone()),
        })
    }

    /// `objective_eval`: value and gradient at the instance's true parameters.
    pub fn objective_eval(&self, x: &DVector<f64>, inst: &ProblemInstance) -> Result<(f64, DVector<f64>)> {
        self.objective_with(x, &inst.w, inst)
    }

    /// Cost vector `∇ₓf` of a linear objective under parameters `w`.
    pub fn cost_vector(&self, w: &DVector<f64>, inst: &ProblemInstance) -> Result<DVector<f64>> {
        if !self.objective.is_linear() {
            return Err(Error::Config(format!(
                "{} objective is not linear",
                self.objective.kind_name()
            )));
        }
        let x = DVector::zeros(self.n_vars());
        Ok(self.objective_with(&x, w, inst)?.1)
    }

    /// `∇²ₓₓf(x, w)` and `∇_w∇ₓf(x, w)`.
    pub fn second_derivatives(
        &self,
        x: &DVector<f64>,
        w: &DVector<f64>,
        inst: &ProblemInstance,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n_vars();
        check_dim("second_derivatives x", n, x.len())?;
        check_dim("second_derivatives w", self.param_dim(), w.len())?;
        Ok(match &self.objective {
            Objective::QuadraticPortfolio { lambda } => {
                (covariance(inst)? * (-2.0 * lambda), DMatrix::identity(n, n))
            }
            Objective::LogSumExpPortfolio => {
                let sigma = softmax_weights(x, w);
                let mut curv = DMatrix::from_diagonal(&sigma) - &sigma * sigma.transpose();
                let h = DMatrix::from_fn(n, n, |i, j| -w[i] * curv[(i, j)] * w[j]);
                for i in 0..n {
                    for j in 0..n {
                        curv[(i, j)] *= -w[i] * x[j];
                    }
                }
                (h, DMatrix::from_diagonal(&sigma) + curv)
            }
            Objective::LinearOpf { v0, admittance } => (DMatrix::zeros(n, n), admittance.transpose() * -v0),
            Objective::LinearKnapsack { .. } => (DMatrix::zeros(n, n), DMatrix::identity(n, n)),
        })
    }

    /// Solves `max_x f(x, w)` over the polytope.
    pub fn solve_with(
        &self,
        w: &DVector<f64>,
        inst: &ProblemInstance,
        settings: &SolverSettings,
    ) -> Result<KktCertificate> {
        check_dim("solve_with parameters", self.param_dim(), w.len())?;
        match &self.objective {
            Objective::QuadraticPortfolio { lambda } => {
                solver::solve_qp(&self.polytope, w, covariance(inst)?, *lambda, settings)
            }
            Objective::LogSumExpPortfolio => {
                let n = self.n_vars();
                let x0 = DVector::from_element(n, 1.0 / n as f64);
                solver::solve_concave(&self.polytope, |x| logsumexp(x, w), &x0, settings)
            }
            Objective::LinearOpf { .. } | Objective::LinearKnapsack { .. } => {
                let c = self.cost_vector(w, inst)?;
                solver::solve_lp(&self.polytope, &c, settings)
            }
        }
    }

    /// `max_x f(x, w)` at the instance's true parameters.
    pub fn optimum(&self, inst: &ProblemInstance, settings: &SolverSettings) -> Result<(f64, KktCertificate)> {
        let cert = self.solve_with(&inst.w, inst, settings)?;
        let value = self.objective_eval(&cert.x_star, inst)?.0;
        Ok((value, cert))
    }

    /// Writes the benchmark as a JSON document.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let b: Benchmark = serde_json::from_reader(file)?;
        if b.dataset.is_empty() {
            return Err(Error::Config(format!("{}: empty dataset", path.display())));
        }
        Ok(b)
    }
}

fn softmax_weights(x: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
    let z = DVector::from_fn(x.len(), |i, _| -p[i] * x[i]);
    let m = z.max();
    let e = z.map(|zi| (zi - m).exp());
    let s = e.sum();
    e / s
}

/// `−log Σ exp(−pᵢxᵢ)` and its gradient, evaluated with max-subtraction.
pub fn logsumexp(x: &DVector<f64>, p: &DVector<f64>) -> (f64, DVector<f64>) {
    let z = DVector::from_fn(x.len(), |i, _| -p[i] * x[i]);
    let m = z.max();
    let e = z.map(|zi| (zi - m).exp());
    let s = e.sum();
    let value = -(m + s.ln());
    let grad = DVector::from_fn(x.len(), |i, _| p[i] * e[i] / s);
    (value, grad)
}

/// Benchmark selection as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchmarkSpec {
    Portfolio {
        #[serde(default = "default_securities")]
        n_securities: usize,
        #[serde(default)]
        lambda: f64,
        #[serde(default = "default_portfolio_samples")]
        n_samples: usize,
        #[serde(default)]
        variant: PortfolioVariant,
        #[serde(default)]
        source: PortfolioSource,
    },
    Opf {
        #[serde(default = "default_nodes")]
        n_nodes: usize,
        #[serde(default = "default_samples")]
        n_samples: usize,
    },
    Knapsack {
        #[serde(default = "default_items")]
        n: usize,
        #[serde(default = "default_resources")]
        m: usize,
        #[serde(default = "default_samples")]
        n_samples: usize,
    },
    /// Dataset dump written by [`Benchmark::dump`]; identical for every seed.
    File { path: PathBuf },
}

fn default_securities() -> usize {
    50
}
fn default_portfolio_samples() -> usize {
    200
}
fn default_nodes() -> usize {
    8
}
fn default_samples() -> usize {
    512
}
fn default_items() -> usize {
    20
}
fn default_resources() -> usize {
    15
}

impl BenchmarkSpec {
    pub fn generate(&self, seed: u64) -> Result<Benchmark> {
        match self {
            BenchmarkSpec::Portfolio {
                n_securities,
                lambda,
                n_samples,
                variant,
                source,
            } => gen_portfolio(seed, *n_securities, *lambda, *n_samples, *variant, source),
            BenchmarkSpec::Opf { n_nodes, n_samples } => gen_opf(seed, *n_nodes, *n_samples),
            BenchmarkSpec::Knapsack { n, m, n_samples } => gen_knapsack(seed, *n, *m, *n_samples),
            BenchmarkSpec::File { path } => Benchmark::load(path),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BenchmarkSpec::Portfolio { variant, .. } => match variant {
                PortfolioVariant::Standard => "portfolio".into(),
                PortfolioVariant::LogSumExp => "portfolio_lse".into(),
            },
            BenchmarkSpec::Opf { .. } => "opf".into(),
            BenchmarkSpec::Knapsack { .. } => "knapsack".into(),
            BenchmarkSpec::File { path } => format!("file:{}", path.display()),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            BenchmarkSpec::Portfolio {
                lambda,
                variant: PortfolioVariant::Standard,
                ..
            } => Some(*lambda),
            _ => None,
        }
    }

    /// Linear true objective, known without generating data (`None` for
    /// file-backed benchmarks).
    pub fn is_linear(&self) -> Option<bool> {
        match self {
            BenchmarkSpec::Portfolio { lambda, variant, .. } => {
                Some(*variant == PortfolioVariant::Standard && *lambda == 0.0)
            }
            BenchmarkSpec::Opf { .. } | BenchmarkSpec::Knapsack { .. } => Some(true),
            BenchmarkSpec::File { .. } => None,
        }
    }
}

/// Independent generator stream for `(seed, purpose)`.
pub(crate) fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}
