//! Pre-train a temporal model, finetune it, and evaluate with and without
//! test-time augmentation over resampled sequences.

use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{evaluate, finetune, pretrain, EvalOptions, RunConfig};
use satmae::model::Variant;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    let cfg = SyntheticConfig {
        bands: 3,
        train: 192,
        val: 48,
        temporal_depth: 4,
        ..SyntheticConfig::easy()
    };
    generate_synthetic(&cfg, &data)?;

    let mut run = RunConfig {
        dataset: data.clone(),
        out_dir: dir.path().join("pre"),
        epochs: 2,
        base_lr: 3e-3,
        warmup_epochs: 1.0,
        ..RunConfig::default()
    };
    run.model.variant = Variant::Temporal;
    run.model.bands = satmae::data::BandPolicy::KeepAll;
    let pre = pretrain(&run)?;

    let mut ft = run.clone();
    ft.out_dir = dir.path().join("ft");
    ft.init = Some(pre.checkpoint);
    ft.epochs = 3;
    let report = finetune(&ft)?;
    for e in &report.history {
        println!("epoch {} train loss {:.3} top-1 {:.3} top-5 {:.3}", e.epoch, e.train_loss, e.top1, e.top5);
    }
    println!("best top-1 {:.3} at epoch {}", report.best_top1, report.best_epoch);

    for tta in [false, true] {
        let r = evaluate(&report.best_checkpoint, &data, &EvalOptions { tta, ..EvalOptions::default() })?;
        println!("tta {tta}: top-1 {:.3}, top-5 {:.3}", r.metrics.top1, r.metrics.top5);
    }
    Ok(())
}
