//! Replace band subsets with their mean and measure the accuracy drop.

use satmae::data::{generate_synthetic, SyntheticConfig};
use satmae::harness::{ablate_bands, finetune, EvalOptions, RunConfig};
use satmae::model::Variant;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("data");
    let ds = generate_synthetic(
        &SyntheticConfig {
            train: 256,
            val: 96,
            ..SyntheticConfig::easy()
        },
        &data,
    )?;
    let mut run = RunConfig {
        dataset: data.clone(),
        out_dir: dir.path().join("ft"),
        epochs: 3,
        base_lr: 4e-3,
        warmup_epochs: 1.0,
        ..RunConfig::default()
    };
    run.model.variant = Variant::SpectralGroup;
    let ft = finetune(&run)?;

    let bands = &ds.manifest().bands;
    let subsets = vec![
        bands[..4].to_vec(),
        bands[4..8].to_vec(),
        bands[8..].to_vec(),
        bands.clone(),
    ];
    let table = ablate_bands(&ft.best_checkpoint, &data, &subsets, &EvalOptions::default())?;
    print!("{}", table.render());
    Ok(())
}
