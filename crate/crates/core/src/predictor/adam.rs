use serde::{Deserialize, Serialize};

use super::mlp::{slices, slices_mut, MlpGradient, MlpParams};
use crate::error::{Error, Result};

/// Adam moments and hyperparameters. Updates *ascend* along the supplied
/// direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: MlpGradient,
    pub v: MlpGradient,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams, learning_rate: f64) -> Self {
        AdamState {
            m: MlpGradient::zeros_like(params),
            v: MlpGradient::zeros_like(params),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// `θ ← θ + η m̂ / (√v̂ + ε)` with bias-corrected moments.
    pub fn adam_step(&mut self, params: &mut MlpParams, direction: &MlpGradient) -> Result<()> {
        if !params.same_shape(direction) || !params.same_shape(&self.m) {
            return Err(Error::DimensionMismatch {
                context: "adam_step direction",
                expected: params.n_params(),
                got: direction.values().count(),
            });
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.step as f64);
        let c2 = 1.0 - b2.powf(self.step as f64);
        let (lr, eps) = (self.learning_rate, self.epsilon);
        let moments = slices_mut(&mut self.m.layers).zip(slices_mut(&mut self.v.layers));
        for ((theta, (m, v)), g) in params.slices_mut().zip(moments).zip(slices(&direction.layers)) {
            for (((theta, m), v), g) in theta.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *theta += lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
