//! The masked autoencoder, its classification heads and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod mae;

pub use checkpoint::{Checkpoint, CheckpointHeader, CheckpointKind, TensorMap, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Variant};
pub use mae::{reconstruction_loss, ClassifyMode, MaskedAutoencoder, ModelInput, Parts, PretrainOutput, Sample};
