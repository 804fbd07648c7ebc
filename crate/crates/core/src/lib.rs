//! Masked autoencoder pre-training for temporal and multi-spectral imagery.
//!
//! The crate is organised bottom-up:
//!
//! - [`encodings`]: sinusoidal position, time and band-group encodings.
//! - [`tokenizer`]: patchification, band groups, patch embeddings, token batches.
//! - [`masking`]: mask plans for consistent and independent strategies, crops.
//! - [`model`]: the encoder/decoder transformer, reconstruction loss, heads, checkpoints.
//! - [`data`]: band handling, normalization, the dataset format and a synthetic generator.
//! - [`harness`]: pre-training, finetuning, probing, evaluation and ablation runs.

pub mod data;
pub mod encodings;
pub mod error;
pub mod harness;
pub mod masking;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tokenizer;

pub use error::{Error, Result};
