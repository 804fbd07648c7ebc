//! Run configurations as TOML files with per-field defaults.

use satmae::harness::RunConfig;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("pretrain.toml");
    std::fs::write(
        &path,
        r#"
dataset = "data/synthetic"
out_dir = "runs/group"
epochs = 20
base_lr = 6e-3
accum_steps = 4

[model]
variant = "spectral_group"
mask_strategy = "independent_per_axis"
"#,
    )?;
    let run = RunConfig::from_file(&path)?;
    println!("effective batch {}, peak lr {:.2e}", run.effective_batch(), run.peak_lr());
    println!("variant {:?}, mask ratio {}", run.model.variant, run.model.mask_ratio);
    println!("{}", serde_json::to_string_pretty(&run)?);
    Ok(())
}
