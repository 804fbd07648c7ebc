//! Patchify images, slice band groups and fold frames into tokens.

use satmae::data::default_groups;
use satmae::encodings::Timestamp;
use satmae::tokenizer::{patchify, patchify_temporal, slice_groups, unpatchify, SpectralImage, TemporalSample};

fn main() -> anyhow::Result<()> {
    let bands = default_groups().bands();
    let pixels: Vec<f32> = (0..bands.len() * 16 * 16).map(|v| v as f32).collect();
    let image = SpectralImage::new(16, 16, pixels, bands)?;

    let patches = patchify(&image, 8)?;
    println!("10x16x16 image, P=8: {} patches of {} values", patches.rows(), patches.cols());
    let back = unpatchify(&patches, 16, 16, 8, image.channels())?;
    println!("unpatchify restores the image: {}", back == image.pixels());

    for (i, g) in slice_groups(&image, &default_groups())?.iter().enumerate() {
        println!("group {i}: {:?} -> {} values per patch", g.band_ids(), patchify(g, 8)?.cols());
    }

    let frames = vec![image.clone(), image.clone(), image.clone(), image];
    let stamps = (0..4).map(|m| Timestamp::date(2018, m)).collect::<Result<Vec<_>, _>>()?;
    let sample = TemporalSample::new(frames, stamps, Some(0))?;
    let cubes = patchify_temporal(&sample, 8, 2)?;
    println!("4 frames, 2 per token: {} tokens of {} values", cubes.rows(), cubes.cols());
    Ok(())
}
