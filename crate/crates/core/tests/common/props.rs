//! Round-trip properties shared by the property tests and the acceptance run.

use candle_core::{DType, Device};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use satmae::data::{denormalize, normalize, BandStats, Dataset, DatasetManifest, DatasetWriter};
use satmae::encodings::Timestamp;
use satmae::model::{Checkpoint, CheckpointKind, MaskedAutoencoder, ModelConfig, Parts, Variant};
use satmae::tokenizer::{patchify, unpatchify, SpectralImage};

pub fn band_names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("S{i}")).collect()
}

/// Random image whose sides are multiples of the returned patch size.
pub fn image_strategy() -> impl Strategy<Value = (SpectralImage, usize)> {
    (1usize..5, 1usize..5, 1usize..4, 1usize..5).prop_flat_map(|(c, gh, gw, p)| {
        let n = c * gh * p * gw * p;
        prop::collection::vec(-1e4f32..1e4, n)
            .prop_map(move |px| (SpectralImage::new(gh * p, gw * p, px, band_names(c)).unwrap(), p))
    })
}

pub fn patchify_round_trip(img: &SpectralImage, p: usize) -> Result<(), TestCaseError> {
    let patches = patchify(img, p).unwrap();
    prop_assert_eq!(patches.rows(), (img.height() / p) * (img.width() / p));
    prop_assert_eq!(patches.cols(), p * p * img.channels());
    let back = unpatchify(&patches, img.height(), img.width(), p, img.channels()).unwrap();
    prop_assert_eq!(back.as_slice(), img.pixels());
    Ok(())
}

pub fn normalize_round_trip(img: &SpectralImage, seed: u64) -> Result<(), TestCaseError> {
    let c = img.channels();
    let s = seed as usize;
    let mean: Vec<f64> = (0..c).map(|i| 500.0 + 97.0 * ((s + i) % 13) as f64).collect();
    let std: Vec<f64> = (0..c).map(|i| 50.0 + 31.0 * ((s * 7 + i) % 11) as f64).collect();
    let stats = BandStats::new(band_names(c), mean.clone(), std).unwrap();
    let back = denormalize(&normalize(img, &stats).unwrap(), &stats).unwrap();
    for ch in 0..c {
        for (a, b) in back.band(ch).iter().zip(img.band(ch)) {
            // f32 storage: the tolerance is relative to the value's magnitude.
            let scale = (*b as f64).abs().max(mean[ch].abs()).max(1.0);
            prop_assert!(((a - b) as f64).abs() <= 1e-6 * scale, "{a} vs {b}");
        }
    }
    Ok(())
}

pub fn dataset_write_read(img: &SpectralImage, labels: &[usize]) -> Result<(), TestCaseError> {
    let dir = tempfile::tempdir().unwrap();
    let c = img.channels();
    let manifest = DatasetManifest::new(
        "p",
        band_names(c),
        [img.height(), img.width()],
        vec!["a".into(), "b".into(), "c".into()],
    );
    let mut w = DatasetWriter::create(dir.path(), manifest).unwrap();
    let mut written = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        let mut frame = img.clone();
        for v in frame.pixels_mut() {
            *v += i as f32;
        }
        let ts = Timestamp::date(2016 + i as i32, (i % 12) as u8).unwrap();
        w.add("train", &format!("s{i}"), &format!("loc{}", i % 2), ts, Some(label), &frame)
            .unwrap();
        written.push(frame);
    }
    let ds = w.finish().unwrap();
    let back = Dataset::open(dir.path()).unwrap();
    // Opening computes and caches band statistics when they are missing.
    prop_assert!(back.manifest().stats.is_some());
    let mut reread = back.manifest().clone();
    reread.stats = None;
    prop_assert_eq!(&reread, ds.manifest());
    for (i, frame) in written.iter().enumerate() {
        prop_assert_eq!(&back.load("train", i).unwrap(), frame);
    }
    Ok(())
}

/// Save, load, save again: equal structures and identical bytes.
pub fn checkpoint_round_trip(seed: u64, depth: usize, c: usize) -> Result<(), TestCaseError> {
    let mut cfg = ModelConfig::micro(Variant::Plain, [8, 8], band_names(c))
        .unwrap()
        .with_widths(16, depth, 2, 8, 1, 2)
        .unwrap();
    cfg.patch_size = 4;
    let m = MaskedAutoencoder::new(cfg, Parts::PRETRAIN, DType::F32, &Device::Cpu, seed).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    let ck = Checkpoint::from_model(&m, CheckpointKind::Pretrain, 1).unwrap();
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    prop_assert_eq!(&loaded, &ck);
    let path2 = dir.path().join("b.ckpt");
    loaded.save(&path2).unwrap();
    prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    Ok(())
}
