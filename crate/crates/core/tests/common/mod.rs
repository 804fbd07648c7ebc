#![allow(dead_code)]

pub mod props;

use std::path::{Path, PathBuf};

use satmae::data::{generate_synthetic, Dataset, SyntheticConfig};
use satmae::harness::RunConfig;
use satmae::model::Variant;

/// A small synthetic dataset: 4 classes, 4 bands, 16x16 pixels.
pub fn tiny_dataset(root: &Path, seed: u64) -> Dataset {
    let cfg = SyntheticConfig {
        name: "tiny".into(),
        classes: 4,
        bands: 4,
        size: 16,
        train: 48,
        val: 24,
        temporal_depth: 3,
        seed,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg, root).unwrap()
}

/// A run small enough to finish in a couple of seconds.
pub fn tiny_run(dataset: &Path, out: PathBuf, variant: Variant) -> RunConfig {
    let mut run = RunConfig {
        dataset: dataset.to_path_buf(),
        out_dir: out,
        epochs: 2,
        batch_size: 16,
        base_lr: 1e-3,
        warmup_epochs: 1.0,
        ..RunConfig::default()
    };
    run.model.variant = variant;
    run.model.embed_dim = Some(32);
    run.model.depth = Some(2);
    run.model.heads = Some(2);
    run.model.decoder_dim = Some(32);
    run.model.decoder_depth = Some(1);
    run.model.decoder_heads = Some(2);
    run.model.patch_size = Some(4);
    run
}
