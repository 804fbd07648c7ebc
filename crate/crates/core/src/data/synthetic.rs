//! Procedural multi-spectral, multi-temporal dataset with learnable classes.
//!
//! Each location has a structure made of an oriented grating and a few
//! blobs, rendered through a per-band spectral response. By default the
//! class sets only the grating's orientation and frequency; the knobs below
//! can also tie blob count, band means, spectral response and cross-band
//! covariance to the class. A smooth field shared by all bands adds
//! cross-band correlation, so one band group carries information about the
//! others.
//! Successive frames of a location are six months apart; brightness follows
//! the month and the structure drifts with the year.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bands::{SENTINEL2_BANDS, SENTINEL2_MEAN, SENTINEL2_STD, SYNTHETIC_ANALOGS};
use super::dataset::{Dataset, DatasetManifest, DatasetWriter};
use crate::encodings::Timestamp;
use crate::error::{ensure, Result};
use crate::rng::{stream_rng, Rng, Stream};
use crate::tokenizer::SpectralImage;

pub const FIRST_YEAR: i32 = 2015;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub name: String,
    pub classes: usize,
    pub bands: usize,
    pub size: usize,
    pub train: usize,
    pub val: usize,
    /// Images per location.
    pub temporal_depth: usize,
    pub seed: u64,
    /// Amplitude of the class texture, in band standard deviations.
    pub texture_strength: f64,
    /// Multiplier on the class grating frequencies (1.5 and 3 cycles per image).
    pub frequency_scale: f64,
    /// Whether the number of blobs depends on the class. Otherwise each
    /// location draws 1 to 3 blobs.
    pub class_blobs: bool,
    /// Amplitude of the per-class mean spectral offset.
    pub signature_strength: f64,
    /// Relative spread of the per-class band response around a response
    /// shared by all classes.
    pub response_spread: f64,
    /// Random rotation of each location's texture, in radians.
    pub orientation_jitter: f64,
    /// Loading of the smooth field shared by all bands.
    pub band_correlation: f64,
    /// Relative spread of the per-class, per-band loading of the shared
    /// field. Nonzero values make the cross-band covariance class-specific.
    pub field_spread: f64,
    /// Month-keyed brightness swing.
    pub seasonal_amplitude: f64,
    /// Pixel-level independent noise.
    pub noise: f64,
    /// Per-image brightness offset common to all bands.
    pub brightness_jitter: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            classes: 8,
            bands: 10,
            size: 32,
            train: 2000,
            val: 500,
            temporal_depth: 3,
            seed: 7,
            texture_strength: 1.0,
            frequency_scale: 0.5,
            class_blobs: false,
            signature_strength: 0.0,
            response_spread: 0.05,
            orientation_jitter: 0.2,
            band_correlation: 0.5,
            field_spread: 0.0,
            seasonal_amplitude: 0.3,
            noise: 0.8,
            brightness_jitter: 0.5,
        }
    }
}

impl SyntheticConfig {
    /// Classes separable by band means, spectral response and blob count as
    /// well as texture; small models reach near-perfect accuracy quickly.
    pub fn easy() -> Self {
        Self {
            texture_strength: 0.8,
            frequency_scale: 1.0,
            class_blobs: true,
            signature_strength: 0.15,
            response_spread: 0.6,
            orientation_jitter: 0.15,
            band_correlation: 0.6,
            noise: 0.6,
            brightness_jitter: 0.3,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.classes >= 2, "need at least two classes, got {}", self.classes);
        ensure!(self.bands >= 3, "need at least three bands, got {}", self.bands);
        ensure!(self.size >= 4, "image size {} too small", self.size);
        ensure!(self.train >= 1 && self.val >= 1, "split sizes must be positive");
        ensure!(self.temporal_depth >= 1, "temporal depth must be positive");
        Ok(())
    }

    pub fn band_names(&self) -> Vec<String> {
        (0..self.bands).map(|i| format!("S{i}")).collect()
    }

    /// Reflectance-scale mean and std per band.
    fn band_scales(&self) -> Vec<(f64, f64)> {
        (0..self.bands)
            .map(|i| match SYNTHETIC_ANALOGS.get(i) {
                Some(analog) if self.bands == SYNTHETIC_ANALOGS.len() => {
                    let j = SENTINEL2_BANDS.iter().position(|b| b == analog).unwrap();
                    // B8A's table std is dominated by outliers; cap it.
                    (SENTINEL2_MEAN[j], SENTINEL2_STD[j].min(1400.0))
                }
                _ => (1000.0 + 100.0 * i as f64, 500.0 + 50.0 * i as f64),
            })
            .collect()
    }
}

/// Class-level generative parameters.
struct ClassModel {
    orientation: f64,
    frequency: f64,
    blobs: usize,
    signature: Vec<f64>,
    response: Vec<f64>,
    field_loading: Vec<f64>,
}

fn class_models(cfg: &SyntheticConfig) -> Vec<ClassModel> {
    let mut base_rng = stream_rng(cfg.seed, Stream::Generate, &[0, u64::MAX]);
    let base: Vec<f64> = (0..cfg.bands).map(|_| base_rng.gen_range(0.6..1.4)).collect();
    (0..cfg.classes)
        .map(|k| {
            let mut rng = stream_rng(cfg.seed, Stream::Generate, &[0, k as u64]);
            ClassModel {
                orientation: PI * (k % 4) as f64 / 4.0,
                frequency: cfg.frequency_scale * (1.5 + 1.5 * ((k / 4) % 3) as f64),
                blobs: 1 + (k % 3),
                signature: (0..cfg.bands)
                    .map(|_| cfg.signature_strength * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect(),
                response: base
                    .iter()
                    .map(|b| b * (1.0 + cfg.response_spread * rng.gen_range(-1.0..1.0)))
                    .collect(),
                field_loading: (0..cfg.bands)
                    .map(|_| cfg.band_correlation * (1.0 + cfg.field_spread * rng.gen_range(-1.0..1.0)))
                    .collect(),
            }
        })
        .collect()
}

/// Location-level draws shared by all frames of a location.
struct LocationDraw {
    class: usize,
    phase: f64,
    orientation_jitter: f64,
    blob_centres: Vec<(f64, f64)>,
    drift: (f64, f64),
    field: Vec<(f64, f64, f64, f64)>,
    first_year: i32,
    first_month: u8,
}

fn draw_location(cfg: &SyntheticConfig, class: usize, model: &ClassModel, rng: &mut Rng) -> LocationDraw {
    let s = cfg.size as f64;
    let drift_angle = rng.gen_range(0.0..2.0 * PI);
    LocationDraw {
        class,
        phase: rng.gen_range(0.0..2.0 * PI),
        orientation_jitter: if cfg.orientation_jitter > 0.0 {
            rng.gen_range(-cfg.orientation_jitter..cfg.orientation_jitter)
        } else {
            0.0
        },
        blob_centres: (0..if cfg.class_blobs { model.blobs } else { rng.gen_range(1..=3) })
            .map(|_| (rng.gen_range(0.15 * s..0.85 * s), rng.gen_range(0.15 * s..0.85 * s)))
            .collect(),
        drift: (drift_angle.cos() * 0.04 * s, drift_angle.sin() * 0.04 * s),
        field: (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.3..1.2),
                    rng.gen_range(0.3..1.2),
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect(),
        first_year: FIRST_YEAR + rng.gen_range(0..5),
        first_month: rng.gen_range(0..12),
    }
}

fn frame_timestamp(loc: &LocationDraw, frame: usize) -> Timestamp {
    let months = loc.first_month as usize + 6 * frame;
    Timestamp {
        year: loc.first_year + (months / 12) as i32,
        month: (months % 12) as u8,
        hour: 0,
    }
}

fn render(
    cfg: &SyntheticConfig,
    model: &ClassModel,
    loc: &LocationDraw,
    ts: Timestamp,
    scales: &[(f64, f64)],
    rng: &mut Rng,
) -> Result<SpectralImage> {
    let n = cfg.size;
    let s = n as f64;
    let years = (ts.year - FIRST_YEAR) as f64;
    let season = cfg.seasonal_amplitude * (2.0 * PI * ts.month as f64 / 12.0).sin();
    let brightness = cfg.brightness_jitter * Distribution::<f64>::sample(&StandardNormal, rng);
    let theta = model.orientation + loc.orientation_jitter;
    let (ct, st) = (theta.cos(), theta.sin());
    let phase = loc.phase + 0.3 * years;
    let radius = 0.1 * s;

    let mut structure = vec![0.0; n * n];
    let mut shared = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let grating = (2.0 * PI * model.frequency * (xf * ct + yf * st) / s + phase).sin();
            let mut blobs = 0.0;
            for &(bx, by) in &loc.blob_centres {
                let dx = xf - (bx + loc.drift.0 * years);
                let dy = yf - (by + loc.drift.1 * years);
                blobs += (-(dx * dx + dy * dy) / (2.0 * radius * radius)).exp();
            }
            structure[y * n + x] = cfg.texture_strength * (0.6 * grating + 1.2 * blobs - 0.4);
            shared[y * n + x] = loc
                .field
                .iter()
                .map(|&(fx, fy, px, py)| (2.0 * PI * fx * xf / s + px).sin() * (2.0 * PI * fy * yf / s + py).cos())
                .sum::<f64>()
                / 3f64.sqrt();
        }
    }

    let mut pixels = Vec::with_capacity(cfg.bands * n * n);
    for c in 0..cfg.bands {
        let (mean, std) = scales[c];
        for i in 0..n * n {
            let eps: f64 = StandardNormal.sample(rng);
            let z = model.signature[c]
                + model.response[c] * structure[i]
                + model.field_loading[c] * shared[i]
                + cfg.noise * eps
                + brightness
                + season;
            pixels.push((mean + std * z) as f32);
        }
    }
    SpectralImage::new(n, n, pixels, cfg.band_names())
}

/// Generate the dataset into `root` and return it opened.
pub fn generate_synthetic(cfg: &SyntheticConfig, root: impl AsRef<Path>) -> Result<Dataset> {
    cfg.validate()?;
    let models = class_models(cfg);
    let scales = cfg.band_scales();
    let class_names = (0..cfg.classes).map(|k| format!("class_{k}")).collect();
    let manifest = DatasetManifest::new(&cfg.name, cfg.band_names(), [cfg.size, cfg.size], class_names);
    let mut writer = DatasetWriter::create(root.as_ref(), manifest)?;
    for (split_idx, (split, count)) in [("train", cfg.train), ("val", cfg.val)].into_iter().enumerate() {
        let locations = count.div_ceil(cfg.temporal_depth);
        let mut written = 0;
        for l in 0..locations {
            let class = l % cfg.classes;
            let mut rng = stream_rng(cfg.seed, Stream::Generate, &[1 + split_idx as u64, l as u64]);
            let loc = draw_location(cfg, class, &models[class], &mut rng);
            let location = format!("{split}-{l:05}");
            for f in 0..cfg.temporal_depth.min(count - written) {
                let ts = frame_timestamp(&loc, f);
                let img = render(cfg, &models[class], &loc, ts, &scales, &mut rng)?;
                writer.add(split, &format!("{location}-{f}"), &location, ts, Some(loc.class), &img)?;
                written += 1;
            }
        }
    }
    let mut ds = writer.finish()?;
    let stats = ds.compute_stats("train")?;
    ds.set_stats(stats)?;
    Ok(ds)
}
