//! Write imagery into the on-disk format, then select bands and normalize.

use satmae::data::{normalize, select_bands, BandPolicy, Dataset, DatasetManifest, DatasetWriter, SENTINEL2_BANDS};
use satmae::encodings::Timestamp;
use satmae::tokenizer::SpectralImage;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let bands: Vec<String> = SENTINEL2_BANDS.iter().map(|b| b.to_string()).collect();
    let manifest = DatasetManifest::new("ingest-demo", bands.clone(), [8, 8], vec!["field".into(), "forest".into()]);
    let mut writer = DatasetWriter::create(dir.path(), manifest)?;
    for i in 0..6 {
        let px = (0..13 * 64).map(|v| 1000.0 + ((v * 7 + i * 31) % 500) as f32).collect();
        let image = SpectralImage::new(8, 8, px, bands.clone())?;
        let when = Timestamp::date(2016 + (i / 2) as i32, (i * 3 % 12) as u8)?;
        writer.add("train", &format!("img{i}"), &format!("site{}", i % 3), when, Some(i % 2), &image)?;
    }
    writer.finish()?;

    let ds = Dataset::open(dir.path())?;
    let image = ds.load("train", 0)?;
    let kept = select_bands(&image, &BandPolicy::Default)?;
    println!("default band policy keeps {:?}", kept.band_ids());
    let stats = ds.stats()?.clone();
    let z = normalize(&image, &stats)?;
    println!("normalized B4 first pixel: {:.3}", z.band(z.band_index("B4").unwrap())[0]);
    println!("sites: {:?}", ds.locations("train"));
    Ok(())
}
