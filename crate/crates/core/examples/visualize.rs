//! Original / masked / reconstructed panels for a pre-trained model.

use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{pretrain, visualize, RunConfig, VisualizeOptions};
use satmae::model::Variant;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "visualize-out".into());
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    generate_synthetic(
        &SyntheticConfig {
            train: 128,
            val: 16,
            ..SyntheticConfig::default()
        },
        &data,
    )?;
    let mut run = RunConfig {
        dataset: data.clone(),
        out_dir: dir.path().join("pre"),
        epochs: 2,
        base_lr: 6e-3,
        warmup_epochs: 1.0,
        ..RunConfig::default()
    };
    run.model.variant = Variant::SpectralGroup;
    let pre = pretrain(&run)?;
    let opts = VisualizeOptions {
        indices: vec![0, 1, 2],
        ..VisualizeOptions::default()
    };
    for path in visualize(&pre.checkpoint, &data, out.as_ref(), &opts)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
