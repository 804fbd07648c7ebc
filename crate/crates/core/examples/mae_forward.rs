//! One masked-autoencoder pass by hand: tokens, mask, encode, decode, loss.

use candle_core::{DType, Device};
use satmae::data::synthetic_groups;
use satmae::model::{MaskedAutoencoder, ModelConfig, Parts, Sample, Variant};
use satmae::tokenizer::SpectralImage;

fn main() -> anyhow::Result<()> {
    let bands: Vec<String> = (0..10).map(|i| format!("S{i}")).collect();
    let cfg = ModelConfig::micro(Variant::SpectralGroup, [32, 32], bands.clone())?.with_groups(synthetic_groups(10)?)?;
    let model = MaskedAutoencoder::new(cfg, Parts::PRETRAIN, DType::F32, &Device::Cpu, 0)?;
    println!("{} parameters", model.store().num_elements());

    let samples: Vec<Sample> = (0..2)
        .map(|s| {
            let px = (0..10 * 32 * 32).map(|v| ((v + s * 17) % 23) as f32 / 23.0 - 0.5).collect();
            SpectralImage::new(32, 32, px, bands.clone()).map(Sample::Image)
        })
        .collect::<Result<_, _>>()?;
    let input = model.prepare(&samples)?;
    println!("{} tokens per sample in {} slices", input.num_tokens(), input.axes.len());

    let out = model.forward_pretrain(&input, 7)?;
    let visible = out.plans[0].num_visible();
    println!("visible tokens per sample: {visible}");
    for (i, p) in out.predictions.iter().enumerate() {
        println!("slice {i} reconstruction: {:?}", p.dims());
    }
    println!("reconstruction loss on masked patches: {:.4}", out.loss.to_scalar::<f32>()?);

    let features = model.features(&input)?;
    println!("pooled features: {:?}", features.dims());
    Ok(())
}
