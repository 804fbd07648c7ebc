//! Linear classification on frozen features, against a random-init control.

use candle_core::{DType, Device};
use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{linear_probe, pretrain, RunConfig};
use satmae::model::{Checkpoint, CheckpointKind, MaskedAutoencoder, Parts, Variant};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    let ds = generate_synthetic(
        &SyntheticConfig {
            train: 256,
            val: 64,
            ..SyntheticConfig::default()
        },
        &data,
    )?;
    let mut run = RunConfig {
        dataset: data,
        out_dir: dir.path().join("pre"),
        epochs: 3,
        base_lr: 6e-3,
        warmup_epochs: 1.0,
        ..RunConfig::default()
    };
    run.model.variant = Variant::SpectralGroup;
    let pre = pretrain(&run)?;

    // Control: an untrained encoder saved in the same format.
    let cfg = run.model.resolve(&ds, None)?;
    let random = MaskedAutoencoder::new(cfg, Parts::PRETRAIN, DType::F32, &Device::Cpu, 99)?;
    let random_ckpt = dir.path().join("random.ckpt");
    Checkpoint::from_model(&random, CheckpointKind::Pretrain, 0)?.save(&random_ckpt)?;

    for (name, init) in [("pretrained", pre.checkpoint), ("random", random_ckpt)] {
        let mut probe = run.clone();
        probe.out_dir = dir.path().join(format!("probe-{name}"));
        probe.init = Some(init);
        probe.epochs = 20;
        probe.base_lr = 0.05;
        let report = linear_probe(&probe)?;
        println!("{name} encoder: probe top-1 {:.3}", report.best_top1);
    }
    println!("chance: {:.3}", 1.0 / ds.manifest().num_classes() as f64);
    Ok(())
}
