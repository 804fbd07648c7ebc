//! Generate the procedural multi-spectral dataset and inspect it.

use satmae::data::{generate_synthetic, SyntheticConfig};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = SyntheticConfig {
        train: 64,
        val: 16,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg, dir.path())?;
    let m = ds.manifest();
    println!("{} classes, bands {:?}, {}x{} pixels", m.num_classes(), m.bands, m.image_size[0], m.image_size[1]);
    println!("split sizes {:?}", m.split_sizes);
    let stats = ds.stats()?;
    for (b, (mean, std)) in stats.bands.iter().zip(stats.mean.iter().zip(&stats.std)) {
        println!("  {b}: mean {mean:.1}, std {std:.1}");
    }
    let location = ds.record("train", 0)?.location.clone();
    let seq = ds.assemble_location("train", &location, 3, 0)?;
    println!("location {location}: {} frames at {:?}", seq.len(), seq.timestamps);
    Ok(())
}
