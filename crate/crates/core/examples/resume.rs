//! Interrupt a run, resume it, and compare with an uninterrupted run.

use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{pretrain, RunConfig};
use satmae::model::Variant;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    generate_synthetic(
        &SyntheticConfig {
            bands: 4,
            size: 16,
            train: 96,
            val: 16,
            ..SyntheticConfig::default()
        },
        &data,
    )?;
    let mut run = RunConfig {
        dataset: data,
        out_dir: dir.path().join("whole"),
        epochs: 3,
        batch_size: 32,
        ..RunConfig::default()
    };
    run.model.variant = Variant::Plain;
    run.model.patch_size = Some(4);
    let whole = pretrain(&run)?;

    run.out_dir = dir.path().join("interrupted");
    run.stop_after = Some(1);
    pretrain(&run)?;
    run.stop_after = None;
    run.resume = true;
    let resumed = pretrain(&run)?;
    println!("uninterrupted: {:?}", whole.losses());
    println!("resumed:       {:?}", resumed.losses());
    println!("identical: {}", whole.losses() == resumed.losses());

    run.base_lr *= 10.0;
    match pretrain(&run) {
        Err(e) => println!("changed config on resume: {} ({e})", e.category()),
        Ok(_) => println!("unexpectedly resumed a different run"),
    }
    Ok(())
}
