//! Reconstruction grids: original, masked and reconstructed panels.

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::loader::SplitLoader;
use crate::data::bands::SYNTHETIC_ANALOGS;
use crate::data::{denormalize, BandStats, Dataset};
use crate::error::{ensure, Error, Result};
use crate::model::{Checkpoint, CheckpointKind, MaskedAutoencoder, Parts, Variant};
use crate::rng::{derive_seed, Stream};
use crate::tokenizer::{unpatchify, Patches, SpectralImage};

const GRAY: [u8; 3] = [128, 128, 128];
const GAP: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizeOptions {
    pub split: String,
    pub indices: Vec<usize>,
    pub seed: u64,
    /// Nearest-neighbour upscaling factor for the PNGs.
    pub scale: u32,
}

impl Default for VisualizeOptions {
    fn default() -> Self {
        Self {
            split: "val".into(),
            indices: vec![0],
            seed: 0,
            scale: 4,
        }
    }
}

/// How a set of bands becomes a colour image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rendering {
    /// Three band positions shown as red, green, blue.
    Composite([usize; 3]),
    /// Mean of all bands as gray.
    Gray,
}

fn sentinel_name(band: &str, total: usize) -> String {
    match band.strip_prefix('S').and_then(|i| i.parse::<usize>().ok()) {
        Some(i) if total == SYNTHETIC_ANALOGS.len() => SYNTHETIC_ANALOGS[i].to_string(),
        _ => band.to_string(),
    }
}

/// RGB composite when B4/B3/B2 are present, red-edge false colour for
/// B7/B6/B5, the first three bands (reversed) for other wide groups, and
/// grayscale for groups of one or two bands (SWIR).
pub fn choose_rendering(bands: &[String], total_bands: usize) -> Rendering {
    let names: Vec<String> = bands.iter().map(|b| sentinel_name(b, total_bands)).collect();
    let find = |n: &str| names.iter().position(|x| x == n);
    for triple in [["B4", "B3", "B2"], ["B7", "B6", "B5"]] {
        if let (Some(r), Some(g), Some(b)) = (find(triple[0]), find(triple[1]), find(triple[2])) {
            return Rendering::Composite([r, g, b]);
        }
    }
    if bands.len() >= 3 {
        Rendering::Composite([2, 1, 0])
    } else {
        Rendering::Gray
    }
}

/// Map a denormalized image to 8-bit colour over mean +- 2 std per band.
/// `None` pixels are drawn gray.
fn render_panel(img: &SpectralImage, hidden: &dyn Fn(usize, usize) -> bool, stats: &BandStats, how: &Rendering) -> Result<RgbImage> {
    let (h, w) = (img.height(), img.width());
    let scales = img
        .band_ids()
        .iter()
        .map(|b| {
            let i = stats.index(b).ok_or_else(|| Error::invalid(format!("no statistics for band {b}")))?;
            Ok((stats.mean[i], stats.std[i].max(f64::EPSILON)))
        })
        .collect::<Result<Vec<_>>>()?;
    let level = |c: usize, y: usize, x: usize| -> f64 {
        let (m, s) = scales[c];
        ((img.get(c, y, x) as f64 - (m - 2.0 * s)) / (4.0 * s)).clamp(0.0, 1.0)
    };
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = if hidden(y, x) {
                GRAY
            } else {
                match how {
                    Rendering::Composite(ch) => ch.map(|c| (255.0 * level(c, y, x)).round() as u8),
                    Rendering::Gray => {
                        let v = (0..img.channels()).map(|c| level(c, y, x)).sum::<f64>() / img.channels() as f64;
                        [(255.0 * v).round() as u8; 3]
                    }
                }
            };
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    Ok(out)
}

/// One display row: a slice of bands for one frame or band group.
struct PanelRow {
    original: SpectralImage,
    reconstruction: SpectralImage,
    /// Per-patch mask in row-major grid order.
    mask: Vec<bool>,
}

/// Reconstruction rows for one sample. Visible patches in the
/// reconstruction are copied from the input; only masked ones come from
/// the decoder.
fn reconstruct_rows(model: &MaskedAutoencoder, loader: &SplitLoader, index: usize, seed: u64, stats: &BandStats) -> Result<Vec<PanelRow>> {
    let cfg = model.config();
    let sample = loader.sample(index, derive_seed(seed, Stream::Assemble, &[index as u64]), None)?;
    let input = model.prepare(std::slice::from_ref(&sample))?;
    let out = model.forward_pretrain(&input, derive_seed(seed, Stream::Mask, &[index as u64]))?;
    let plan = &out.plans[0];
    let l = input.tokens_per_axis();
    let p = cfg.patch_size;
    let (h, w) = (input.grid.0 * p, input.grid.1 * p);
    let axis_bands: Vec<Vec<String>> = match (&cfg.variant, &cfg.band_groups) {
        (Variant::SpectralGroup, Some(g)) => g.groups.clone(),
        _ => vec![cfg.bands.clone(); input.axes.len()],
    };
    let frames_per_token = if cfg.variant == Variant::Temporal { cfg.frames_per_token } else { 1 };
    let mut rows = Vec::new();
    for (a, bands) in axis_bands.iter().enumerate() {
        let target: Vec<Vec<f32>> = input.axes[a].squeeze(0)?.to_dtype(DType::F32)?.to_vec2()?;
        let pred: Vec<Vec<f32>> = out.predictions[a].squeeze(0)?.to_dtype(DType::F32)?.to_vec2()?;
        let mask = plan.mask[a * l..(a + 1) * l].to_vec();
        let width = bands.len() * p * p;
        for f in 0..frames_per_token {
            let cols = f * width..(f + 1) * width;
            let gather = |src: &Vec<Vec<f32>>, use_pred: bool| -> Result<SpectralImage> {
                let mut data = Vec::with_capacity(l * width);
                for t in 0..l {
                    let row = if use_pred && mask[t] { &pred[t] } else { &src[t] };
                    data.extend_from_slice(&row[cols.clone()]);
                }
                let px = unpatchify(&Patches::new(l, width, data)?, h, w, p, bands.len())?;
                denormalize(&SpectralImage::new(h, w, px, bands.clone())?, stats)
            };
            rows.push(PanelRow {
                original: gather(&target, false)?,
                reconstruction: gather(&target, true)?,
                mask: mask.clone(),
            });
        }
    }
    Ok(rows)
}

fn compose(rows: &[PanelRow], stats: &BandStats, total_bands: usize, p: usize, scale: u32) -> Result<RgbImage> {
    let (h, w) = (rows[0].original.height() as u32, rows[0].original.width() as u32);
    let gw = w as usize / p;
    let canvas_w = 3 * w + 2 * GAP;
    let canvas_h = rows.len() as u32 * h + (rows.len() as u32 - 1) * GAP;
    let mut canvas = RgbImage::from_pixel(canvas_w, canvas_h, Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        let how = choose_rendering(row.original.band_ids(), total_bands);
        let visible = |_: usize, _: usize| false;
        let masked = |y: usize, x: usize| row.mask[(y / p) * gw + x / p];
        let panels = [
            render_panel(&row.original, &visible, stats, &how)?,
            render_panel(&row.original, &masked, stats, &how)?,
            render_panel(&row.reconstruction, &visible, stats, &how)?,
        ];
        for (c, panel) in panels.iter().enumerate() {
            image::imageops::replace(&mut canvas, panel, (c as u32 * (w + GAP)) as i64, (r as u32 * (h + GAP)) as i64);
        }
    }
    Ok(image::imageops::resize(
        &canvas,
        canvas_w * scale,
        canvas_h * scale,
        image::imageops::FilterType::Nearest,
    ))
}

/// Write one PNG per requested sample into `out_dir`. Temporal models show
/// one row per frame, grouped models one row per band group.
pub fn visualize(checkpoint: &Path, dataset: &Path, out_dir: &Path, opts: &VisualizeOptions) -> Result<Vec<PathBuf>> {
    ensure!(opts.scale >= 1, "scale must be positive");
    let ck = Checkpoint::load(checkpoint)?;
    if ck.kind() != CheckpointKind::Pretrain || !ck.tensors.contains_key("decoder.embed.weight") {
        return Err(Error::InvalidState(format!(
            "{} is not a pre-training checkpoint; reconstructions need the decoder",
            checkpoint.display()
        )));
    }
    let ds = Dataset::open(dataset)?;
    let stats = ds.stats()?.clone();
    let model = MaskedAutoencoder::new(ck.config().clone(), Parts::PRETRAIN, DType::F32, &Device::Cpu, 0)?;
    ck.load_into(&model, |_| true)?;
    let loader = SplitLoader::new(&ds, &opts.split, model.config(), 1)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let total = model.config().bands.len();
    let mut written = Vec::new();
    for &i in &opts.indices {
        ensure!(i < loader.len(), "sample {i} out of range for split {} ({} samples)", opts.split, loader.len());
        let rows = reconstruct_rows(&model, &loader, i, opts.seed, &stats)?;
        let img = compose(&rows, &stats, total, model.config().patch_size, opts.scale)?;
        let path = out_dir.join(format!("sample-{i:04}.png"));
        img.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
