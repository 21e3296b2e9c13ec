use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{serde_dmat, serde_dvec};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// One affine map `z = W a + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(with = "serde_dmat")]
    pub weight: DMatrix<f64>,
    #[serde(with = "serde_dvec")]
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            weight: DMatrix::zeros(rows, cols),
            bias: DVector::zeros(rows),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    fn slices(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), self.bias.as_slice()]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), self.bias.as_mut_slice()]
    }
}

/// Contiguous storage of a layer list, in [`MlpGradient::values`] order.
pub(crate) fn slices(layers: &[Layer]) -> impl Iterator<Item = &[f64]> {
    layers.iter().flat_map(Layer::slices)
}

pub(crate) fn slices_mut(layers: &mut [Layer]) -> impl Iterator<Item = &mut [f64]> {
    layers.iter_mut().flat_map(Layer::slices_mut)
}

/// Per-layer gradients (or any other tensor shaped like [`MlpParams`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGradient {
    pub layers: Vec<Layer>,
}

impl MlpGradient {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGradient {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &MlpGradient) -> f64 {
        let mut acc = 0.0;
        for (a, b) in slices(&self.layers).zip(slices(&other.layers)) {
            for (x, y) in a.iter().zip(b) {
                acc += x * y;
            }
        }
        acc
    }

    /// `self += scale · other`.
    pub fn axpy(&mut self, scale: f64, other: &MlpGradient) {
        for (a, b) in slices_mut(&mut self.layers).zip(slices(&other.layers)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in slices_mut(&mut self.layers) {
            a.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Fully connected network with LeakyReLU hidden layers and an affine
/// output `ŵ = x_scale·y + x_shift`.
///
/// Every mutation assigns a new version; [`ForwardCache`]s taken under an
/// older version are rejected by [`MlpParams::backward`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
    pub leaky_slope: f64,
    pub x_scale: f64,
    pub x_shift: f64,
    #[serde(skip, default = "fresh_version")]
    version: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.leaky_slope == other.leaky_slope
            && self.x_scale == other.x_scale
            && self.x_shift == other.x_shift
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: DVector<f64>,
    /// Pre-activations of each hidden layer.
    pre: Vec<DVector<f64>>,
    /// Inputs to each layer (`input`, then hidden activations).
    acts: Vec<DVector<f64>>,
}

impl MlpParams {
    /// PyTorch-style initialization: every weight and bias of a layer with
    /// fan-in `k` is drawn from `U(−1/√k, 1/√k)`.
    pub fn init<R: Rng>(
        obs_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        leaky_slope: f64,
        x_scale: f64,
        x_shift: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(obs_dim, hidden, out_dim, leaky_slope, x_scale, x_shift)?;
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.weight.ncols() as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            layer.values_mut().for_each(|v| *v = rng.sample(dist));
        }
        Ok(params)
    }

    pub fn zeros(
        obs_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        leaky_slope: f64,
        x_scale: f64,
        x_shift: f64,
    ) -> Result<Self> {
        if obs_dim == 0 || out_dim == 0 || hidden.contains(&0) {
            return Err(Error::Config("network layer sizes must be positive".into()));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(out_dim);
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect();
        Ok(MlpParams {
            layers,
            leaky_slope,
            x_scale,
            x_shift,
            version: fresh_version(),
        })
    }

    /// Builds a network from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Layer>, leaky_slope: f64, x_scale: f64, x_shift: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            check_dim("layer bias", l.weight.nrows(), l.bias.len())?;
            if i > 0 {
                check_dim("layer input", layers[i - 1].weight.nrows(), l.weight.ncols())?;
            }
        }
        Ok(MlpParams {
            layers,
            leaky_slope,
            x_scale,
            x_shift,
            version: fresh_version(),
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn obs_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    /// Mutable access to all parameters; bumps the version.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.version = fresh_version();
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    /// Mutable per-layer weight and bias storage; bumps the version.
    pub(crate) fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.version = fresh_version();
        slices_mut(&mut self.layers)
    }

    pub(crate) fn same_shape(&self, g: &MlpGradient) -> bool {
        self.layers.len() == g.layers.len()
            && self
                .layers
                .iter()
                .zip(&g.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape() && a.bias.len() == b.bias.len())
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    /// Prediction `ŵ` plus the intermediates needed by [`backward`](Self::backward).
    pub fn forward(&self, o: &DVector<f64>) -> Result<(DVector<f64>, ForwardCache)> {
        check_dim("forward observation", self.obs_dim(), o.len())?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(last);
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut a = o.clone();
        for layer in &self.layers[..last] {
            let z = &layer.weight * &a + &layer.bias;
            acts.push(std::mem::replace(&mut a, z.map(|v| self.leaky(v))));
            pre.push(z);
        }
        let out = &self.layers[last].weight * &a + &self.layers[last].bias;
        acts.push(a);
        let w_hat = out * self.x_scale;
        let w_hat = w_hat.add_scalar(self.x_shift);
        if !w_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network output"));
        }
        let cache = ForwardCache {
            version: self.version,
            input: o.clone(),
            pre,
            acts,
        };
        Ok((w_hat, cache))
    }

    pub fn predict(&self, o: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward(o)?.0)
    }

    /// `delta_wᵀ ∇_θ ŵ` for the forward pass recorded in `cache`.
    ///
    /// The LeakyReLU derivative at exactly zero is taken as `leaky_slope`.
    pub fn backward(&self, cache: &ForwardCache, delta_w: &DVector<f64>) -> Result<MlpGradient> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cached: cache.version,
                current: self.version,
            });
        }
        check_dim("backward delta_w", self.out_dim(), delta_w.len())?;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut g = delta_w * self.x_scale;
        for k in (0..self.layers.len()).rev() {
            let a = &cache.acts[k];
            grads.push(Layer {
                weight: &g * a.transpose(),
                bias: g.clone(),
            });
            if k > 0 {
                let back = self.layers[k].weight.tr_mul(&g);
                let z = &cache.pre[k - 1];
                g = back.zip_map(z, |b, z| if z > 0.0 { b } else { self.leaky_slope * b });
            }
        }
        grads.reverse();
        Ok(MlpGradient { layers: grads })
    }

    /// Observation the cache was recorded for.
    pub fn cached_input(cache: &ForwardCache) -> &DVector<f64> {
        &cache.input
    }
}
