//! Masked-reconstruction pre-training on a small synthetic dataset.

use std::path::Path;

use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{pretrain, read_metrics, RunConfig, METRICS_FILE};
use satmae::model::Variant;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    let cfg = SyntheticConfig {
        train: 256,
        val: 64,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg, &data)?;

    let mut run = RunConfig {
        dataset: data,
        out_dir: dir.path().join("pretrain"),
        epochs: 3,
        base_lr: 6e-3,
        warmup_epochs: 1.0,
        ..RunConfig::default()
    };
    run.model.variant = Variant::SpectralGroup;
    let report = pretrain(&run)?;
    for e in &report.history {
        println!("epoch {} loss {:.4} lr {:.2e}", e.epoch, e.loss, e.lr);
    }
    show_dir(&run.out_dir)?;
    println!("{} metric records", read_metrics(&run.out_dir.join(METRICS_FILE))?.len());
    Ok(())
}

fn show_dir(dir: &Path) -> anyhow::Result<()> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>()?;
    names.sort();
    println!("run directory: {names:?}");
    Ok(())
}
