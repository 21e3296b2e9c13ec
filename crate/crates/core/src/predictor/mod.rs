//! The prediction model, its optimizer and the training step.

mod adam;
mod checkpoint;
mod mlp;
mod train;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_VERSION};
pub use mlp::{ForwardCache, Layer, MlpGradient, MlpParams};
pub use train::{
    decide, prediction_direction, train_batch, train_step, Direction, Method, MethodConfig, PredictionSpace,
    StepLog,
};
pub(crate) use train::mix_seed;

/// Hidden layer widths of the default network.
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];

#[cfg(test)]
mod tests;
