//! Convolutional variational autoencoder with a slice-position head.

mod arch;
mod loss;
mod model;
mod ops;
mod real;
mod train;

pub use arch::{Architecture, ConvSpec, Layout, TensorSlot, NUM_CLASSES};
pub use loss::{loss, loss_and_gradient, LossBreakdown, LossWeights};
pub use model::{EncodeResult, VaeModel};
pub use real::Real;
pub use train::{reparameterize, train, train_from, train_with, AdamW, EpochLog, TrainConfig, Trained};

#[cfg(test)]
mod tests;
