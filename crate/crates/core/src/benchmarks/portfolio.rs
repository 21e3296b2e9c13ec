use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{load_price_table, stream, Benchmark, Objective, ProblemInstance};
use crate::error::{Error, Result};
use crate::polytope::Polytope;

const FEATURES: usize = 16;
const FACTORS: usize = 4;
/// Standard deviation of the factor loadings.
const FACTOR_SCALE: f64 = 0.1;
const RIDGE: f64 = 0.01;
const LAGS: usize = 5;
const COV_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioVariant {
    /// `pᵀx − λ xᵀQx`.
    #[default]
    Standard,
    /// `−log Σ exp(−pᵢxᵢ)`.
    #[serde(rename = "logsumexp", alias = "lse")]
    LogSumExp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioSource {
    #[default]
    Synthetic,
    /// Price table with columns `date,ticker,close`.
    Csv { path: PathBuf },
}

/// Portfolio benchmark over the `n_securities`-simplex.
///
/// The synthetic source draws `o ~ N(0, I₁₆)` and
/// `p = 0.1·tanh(B₁o) + 0.02·ξ`; `Q = FFᵀ/4 + 0.01·I` is shared by all
/// samples. The CSV source uses lagged returns scaled by their trailing
/// volatility as features, the next return as `p` and the trailing
/// covariance as `Q`.
pub fn gen_portfolio(
    seed: u64,
    n_securities: usize,
    lambda: f64,
    n_samples: usize,
    variant: PortfolioVariant,
    source: &PortfolioSource,
) -> Result<Benchmark> {
    if n_securities < 2 {
        return Err(Error::Config(format!("portfolio needs at least 2 securities, got {n_securities}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be nonnegative, got {lambda}")));
    }
    let dataset = match source {
        PortfolioSource::Synthetic => synthetic(seed, n_securities, n_samples),
        PortfolioSource::Csv { path } => from_prices(path, n_securities, n_samples)?,
    };
    let (name, objective) = match variant {
        PortfolioVariant::Standard => ("portfolio", Objective::QuadraticPortfolio { lambda }),
        PortfolioVariant::LogSumExp => ("portfolio_lse", Objective::LogSumExpPortfolio),
    };
    Ok(Benchmark {
        name: name.into(),
        polytope: Polytope::simplex(n_securities)?,
        objective,
        dataset,
    })
}

fn synthetic(seed: u64, n: usize, n_samples: usize) -> Vec<ProblemInstance> {
    let mut fixed = stream(seed, 0);
    let scale = (1.0 / FEATURES as f64).sqrt();
    let b1 = DMatrix::from_fn(n, FEATURES, |_, _| scale * fixed.sample::<f64, _>(StandardNormal));
    let f = DMatrix::from_fn(n, FACTORS, |_, _| FACTOR_SCALE * fixed.sample::<f64, _>(StandardNormal));
    let mut q = &f * f.transpose() / FACTORS as f64;
    q += DMatrix::identity(n, n) * RIDGE;
    q = (&q + q.transpose()) * 0.5;

    let mut rng = stream(seed, 1);
    (0..n_samples)
        .map(|id| {
            let o = DVector::from_fn(FEATURES, |_, _| rng.sample::<f64, _>(StandardNormal));
            let signal = &b1 * &o;
            let w = DVector::from_fn(n, |i, _| {
                0.1 * signal[i].tanh() + 0.02 * rng.sample::<f64, _>(StandardNormal)
            });
            ProblemInstance { id, o, w, q: Some(q.clone()) }
        })
        .collect()
}

fn from_prices(path: &std::path::Path, n: usize, n_samples: usize) -> Result<Vec<ProblemInstance>> {
    let table = load_price_table(path)?;
    if table.tickers.len() < n {
        return Err(Error::CsvSchema(format!(
            "{} tickers in table, {n} securities requested",
            table.tickers.len()
        )));
    }
    let closes = table.closes.columns(0, n).into_owned();
    let t_len = closes.nrows();
    let returns = DMatrix::from_fn(t_len.saturating_sub(1), n, |t, j| closes[(t + 1, j)] / closes[(t, j)] - 1.0);
    let first = COV_WINDOW.max(LAGS);
    if returns.nrows() <= first {
        return Err(Error::CsvSchema(format!(
            "need more than {} returns per ticker, got {}",
            first,
            returns.nrows()
        )));
    }
    let available = returns.nrows() - first;
    if available < n_samples {
        log::warn!("price table yields {available} samples, {n_samples} requested");
    }
    let start = first + available.saturating_sub(n_samples);
    Ok((start..returns.nrows())
        .enumerate()
        .map(|(id, t)| {
            let window = returns.rows(t - COV_WINDOW, COV_WINDOW);
            let mean = window.row_mean();
            let centered = DMatrix::from_fn(COV_WINDOW, n, |r, j| window[(r, j)] - mean[j]);
            let mut q = centered.transpose() * &centered / (COV_WINDOW - 1) as f64;
            q += DMatrix::identity(n, n) * 1e-6;
            let o = DVector::from_fn(n * LAGS, |k, _| {
                let (j, lag) = (k / LAGS, k % LAGS + 1);
                let vol = q[(j, j)].sqrt().max(1e-12);
                returns[(t - lag, j)] / vol
            });
            let w = returns.row(t).transpose();
            ProblemInstance { id, o, w, q: Some(q) }
        })
        .collect())
}
