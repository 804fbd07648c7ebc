//! Mask sampling over token sequences and the cropping augmentation that
//! controls spatial alignment between frames.

use std::fmt;
use std::str::FromStr;

use candle_core::Tensor;
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::data::augment::{crop_resize, random_window, CropWindow};
use crate::error::{ensure, Error, Result};
use crate::rng::{derive_seed, stream_rng, Rng, Stream};
use crate::tokenizer::{TemporalSample, TokenBatch};

/// How masked positions are distributed across the axis slices (frames or
/// band groups) of a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStrategy {
    /// The same spatial positions are masked in every slice.
    Consistent,
    /// A fraction of the whole sequence is masked, slices may differ in count.
    IndependentGlobal,
    /// Each slice is masked independently with the same per-slice count.
    IndependentPerAxis,
}

impl MaskStrategy {
    pub const ALL: [MaskStrategy; 3] = [
        MaskStrategy::Consistent,
        MaskStrategy::IndependentGlobal,
        MaskStrategy::IndependentPerAxis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskStrategy::Consistent => "consistent",
            MaskStrategy::IndependentGlobal => "independent_global",
            MaskStrategy::IndependentPerAxis => "independent_per_axis",
        }
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(MaskStrategy::Consistent),
            "independent_global" | "independent" => Ok(MaskStrategy::IndependentGlobal),
            "independent_per_axis" => Ok(MaskStrategy::IndependentPerAxis),
            other => Err(Error::invalid(format!("unknown mask strategy {other}"))),
        }
    }
}

/// Half-up rounding of `ratio * n`.
pub fn masked_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// A sampled mask over `axes * tokens_per_axis` tokens (axis-major order).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    /// `true` = masked.
    pub mask: Vec<bool>,
    /// Visible token indices, ascending.
    pub keep_indices: Vec<usize>,
    /// Masked token indices, ascending.
    pub masked_indices: Vec<usize>,
    /// Position of each original token in `keep_indices ++ masked_indices`.
    pub restore_indices: Vec<usize>,
    pub ratio: f64,
    pub strategy: MaskStrategy,
    pub tokens_per_axis: usize,
    pub axes: usize,
}

impl MaskPlan {
    pub fn from_mask(mask: Vec<bool>, tokens_per_axis: usize, axes: usize, ratio: f64, strategy: MaskStrategy) -> Result<Self> {
        ensure!(
            mask.len() == tokens_per_axis * axes,
            "mask of length {} does not cover {axes} x {tokens_per_axis} tokens",
            mask.len()
        );
        let keep_indices: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let masked_indices: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let mut restore_indices = vec![0; mask.len()];
        for (pos, &i) in keep_indices.iter().chain(&masked_indices).enumerate() {
            restore_indices[i] = pos;
        }
        Ok(Self {
            mask,
            keep_indices,
            masked_indices,
            restore_indices,
            ratio,
            strategy,
            tokens_per_axis,
            axes,
        })
    }

    /// Plan with nothing masked. Only meaningful for diagnostics.
    pub fn all_visible(tokens_per_axis: usize, axes: usize) -> Self {
        Self::from_mask(
            vec![false; tokens_per_axis * axes],
            tokens_per_axis,
            axes,
            0.0,
            MaskStrategy::IndependentGlobal,
        )
        .expect("length matches by construction")
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn num_masked(&self) -> usize {
        self.masked_indices.len()
    }

    pub fn num_visible(&self) -> usize {
        self.keep_indices.len()
    }

    /// Masked count within one axis slice.
    pub fn masked_in_axis(&self, axis: usize) -> usize {
        let l = self.tokens_per_axis;
        self.mask[axis * l..(axis + 1) * l].iter().filter(|&&m| m).count()
    }

    /// The `ids_shuffle` order: visible then masked.
    pub fn shuffle_order(&self) -> Vec<usize> {
        self.keep_indices.iter().chain(&self.masked_indices).copied().collect()
    }
}

/// Sample a mask over `axes` slices of `tokens_per_axis` tokens each.
pub fn sample_mask(tokens_per_axis: usize, axes: usize, ratio: f64, strategy: MaskStrategy, seed: u64) -> Result<MaskPlan> {
    let mut rng = stream_rng(seed, Stream::Mask, &[]);
    sample_mask_with(tokens_per_axis, axes, ratio, strategy, &mut rng)
}

pub fn sample_mask_with(
    tokens_per_axis: usize,
    axes: usize,
    ratio: f64,
    strategy: MaskStrategy,
    rng: &mut Rng,
) -> Result<MaskPlan> {
    ensure!(tokens_per_axis > 0 && axes > 0, "mask needs at least one token");
    ensure!(ratio > 0.0 && ratio < 1.0, "mask ratio {ratio} outside (0, 1)");
    let l = tokens_per_axis;
    let n = l * axes;
    let mut mask = vec![false; n];
    match strategy {
        MaskStrategy::Consistent | MaskStrategy::IndependentPerAxis => {
            let k = masked_count(ratio, l);
            ensure!(
                k >= 1 && k < l,
                "ratio {ratio} masks {k} of {l} tokens per slice; need at least one masked and one visible"
            );
            if strategy == MaskStrategy::Consistent {
                let spatial = sample_indices(rng, l, k);
                for axis in 0..axes {
                    for s in spatial.iter() {
                        mask[axis * l + s] = true;
                    }
                }
            } else {
                for axis in 0..axes {
                    for s in sample_indices(rng, l, k).iter() {
                        mask[axis * l + s] = true;
                    }
                }
            }
        }
        MaskStrategy::IndependentGlobal => {
            let k = masked_count(ratio, n);
            ensure!(
                k >= 1 && k < n,
                "ratio {ratio} masks {k} of {n} tokens; need at least one masked and one visible"
            );
            for i in sample_indices(rng, n, k).iter() {
                mask[i] = true;
            }
        }
    }
    MaskPlan::from_mask(mask, l, axes, ratio, strategy)
}

/// Per-sample plans for a batch, each from its own derived seed.
pub fn sample_batch_masks(
    batch: usize,
    tokens_per_axis: usize,
    axes: usize,
    ratio: f64,
    strategy: MaskStrategy,
    seed: u64,
) -> Result<Vec<MaskPlan>> {
    (0..batch)
        .map(|i| {
            let s = derive_seed(seed, Stream::Mask, &[i as u64]);
            sample_mask(tokens_per_axis, axes, ratio, strategy, s)
        })
        .collect()
}

fn flat_indices(plans: &[MaskPlan], per_plan: impl Fn(&MaskPlan) -> &[usize]) -> Result<(Vec<u32>, usize)> {
    let n = plans[0].len();
    let k = per_plan(&plans[0]).len();
    let mut idx = Vec::with_capacity(plans.len() * k);
    for (b, p) in plans.iter().enumerate() {
        ensure!(p.len() == n, "plans in a batch cover different token counts");
        let sel = per_plan(p);
        ensure!(sel.len() == k, "plans in a batch select different token counts");
        idx.extend(sel.iter().map(|&i| (b * n + i) as u32));
    }
    Ok((idx, k))
}

/// Keep only the visible tokens (and their encodings), in `keep_indices`
/// order. Masked token contents never reach the output.
pub fn apply_mask(batch: &TokenBatch, plans: &[MaskPlan]) -> Result<TokenBatch> {
    let (b, n, d) = batch.tokens.dims3()?;
    ensure!(plans.len() == b, "{} plans for a batch of {b}", plans.len());
    ensure!(plans[0].len() == n, "plan covers {} tokens, batch has {n}", plans[0].len());
    let (idx, k) = flat_indices(plans, |p| &p.keep_indices)?;
    let idx = Tensor::from_vec(idx, b * k, batch.tokens.device())?;
    let gather = |t: &Tensor| -> Result<Tensor> { Ok(t.reshape((b * n, d))?.index_select(&idx, 0)?.reshape((b, k, d))?) };
    let positions = batch
        .positions
        .iter()
        .zip(plans)
        .map(|(pos, p)| p.keep_indices.iter().map(|&i| pos[i]).collect())
        .collect();
    Ok(TokenBatch {
        tokens: gather(&batch.tokens)?,
        encoding: gather(&batch.encoding)?,
        positions,
    })
}

/// Return visible rows `[B, K, D]` to their original positions, filling
/// masked positions with `fill` (`[D]`). Output is `[B, N, D]`.
pub fn restore_with_fill(visible: &Tensor, fill: &Tensor, plans: &[MaskPlan]) -> Result<Tensor> {
    let (b, k, d) = visible.dims3()?;
    ensure!(plans.len() == b, "{} plans for a batch of {b}", plans.len());
    let n = plans[0].len();
    ensure!(
        plans.iter().all(|p| p.num_visible() == k && p.len() == n),
        "plans do not match {k} visible tokens per sample"
    );
    let m = n - k;
    let parts = if m > 0 {
        let fill = fill.reshape((1, 1, d))?.broadcast_as((b, m, d))?;
        Tensor::cat(&[visible, &fill], 1)?
    } else {
        visible.clone()
    };
    let mut idx = Vec::with_capacity(b * n);
    for (bi, p) in plans.iter().enumerate() {
        idx.extend(p.restore_indices.iter().map(|&r| (bi * n + r) as u32));
    }
    let idx = Tensor::from_vec(idx, b * n, visible.device())?;
    Ok(parts.reshape((b * n, d))?.index_select(&idx, 0)?.reshape((b, n, d))?)
}

/// Float mask `[B, N]` (1.0 = masked) in the dtype of `like`.
pub fn mask_tensor(plans: &[MaskPlan], like: &Tensor) -> Result<Tensor> {
    let n = plans.first().map_or(0, MaskPlan::len);
    let v: Vec<f32> = plans
        .iter()
        .flat_map(|p| p.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(v, (plans.len(), n), like.device())?.to_dtype(like.dtype())?)
}

/// Whether frames share one crop window or each draws its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    Consistent,
    Inconsistent,
}

/// Random square crops covering an area fraction drawn from `scale`,
/// resampled to `out_size x out_size`. Returns the cropped sample and the
/// window used for each frame.
pub fn inconsistent_crop(
    sample: &TemporalSample,
    scale: (f64, f64),
    out_size: usize,
    mode: CropMode,
    seed: u64,
) -> Result<(TemporalSample, Vec<CropWindow>)> {
    let (h, w) = (sample.frames[0].height(), sample.frames[0].width());
    ensure!(out_size > 0, "crop output size must be positive");
    ensure!(
        out_size <= h.min(w),
        "crop output {out_size} larger than frame {h}x{w}"
    );
    let mut rng = stream_rng(seed, Stream::Augment, &[]);
    let draw = |rng: &mut Rng| random_window(h, w, scale, rng);
    let windows: Vec<CropWindow> = match mode {
        CropMode::Consistent => {
            let win = draw(&mut rng)?;
            vec![win; sample.len()]
        }
        CropMode::Inconsistent => (0..sample.len()).map(|_| draw(&mut rng)).collect::<Result<_>>()?,
    };
    let frames = sample
        .frames
        .iter()
        .zip(&windows)
        .map(|(f, win)| crop_resize(f, win, out_size, out_size))
        .collect::<Result<Vec<_>>>()?;
    let out = TemporalSample::new(frames, sample.timestamps.clone(), sample.label)?;
    Ok((out, windows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::{EncodingLayout, Timestamp};
    use crate::tokenizer::{build_token_batch, AxisInfo, SpectralImage};
    use candle_core::{DType, Device};

    #[test]
    fn small_plan_counts() {
        let p = sample_mask(4, 3, 0.75, MaskStrategy::Consistent, 1).unwrap();
        assert_eq!(p.num_masked(), 9);
        for a in 0..3 {
            assert_eq!(p.masked_in_axis(a), 3);
            assert_eq!(p.mask[a * 4..(a + 1) * 4], p.mask[..4]);
        }
        let p = sample_mask(4, 3, 0.75, MaskStrategy::IndependentGlobal, 1).unwrap();
        assert_eq!(p.num_masked(), 9);
        let p = sample_mask(144, 3, 0.75, MaskStrategy::IndependentPerAxis, 1).unwrap();
        assert_eq!(p.num_masked(), 324);
        assert!((0..3).all(|a| p.masked_in_axis(a) == 108));
    }

    #[test]
    fn degenerate_ratios_rejected() {
        assert!(sample_mask(4, 1, 0.0, MaskStrategy::IndependentGlobal, 0).is_err());
        assert!(sample_mask(4, 1, 1.0, MaskStrategy::IndependentGlobal, 0).is_err());
        assert!(sample_mask(4, 1, 0.1, MaskStrategy::IndependentPerAxis, 0).is_err());
        assert!(sample_mask(4, 1, 0.9, MaskStrategy::Consistent, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        for s in MaskStrategy::ALL {
            assert_eq!(sample_mask(16, 3, 0.75, s, 42).unwrap(), sample_mask(16, 3, 0.75, s, 42).unwrap());
        }
    }

    #[test]
    fn restore_is_inverse_permutation() {
        let p = sample_mask(16, 3, 0.75, MaskStrategy::IndependentGlobal, 3).unwrap();
        let order = p.shuffle_order();
        for i in 0..p.len() {
            assert_eq!(order[p.restore_indices[i]], i);
        }
    }

    fn batch(values: Vec<f32>, n: usize, d: usize) -> TokenBatch {
        let dev = Device::Cpu;
        let t = Tensor::from_vec(values, (1, n, d), &dev).unwrap();
        let layout = EncodingLayout::spatial(d).unwrap();
        let g = (n as f64).sqrt() as usize;
        build_token_batch(t, (g, g), &layout, &[AxisInfo::Single], None).unwrap()
    }

    #[test]
    fn visible_batch_and_restore() {
        let n = 16;
        let d = 4;
        let vals: Vec<f32> = (0..n * d).map(|v| v as f32).collect();
        let tb = batch(vals.clone(), n, d);
        let plan = sample_mask(16, 1, 0.75, MaskStrategy::IndependentGlobal, 9).unwrap();
        let vis = apply_mask(&tb, &[plan.clone()]).unwrap();
        assert_eq!(vis.tokens.dims(), &[1, 4, d]);
        assert_eq!(vis.positions[0].len(), 4);

        let fill = Tensor::new(&[-1f32; 4], &Device::Cpu).unwrap();
        let full = restore_with_fill(&vis.tokens, &fill, &[plan.clone()]).unwrap();
        let rows: Vec<Vec<f32>> = full.squeeze(0).unwrap().to_vec2().unwrap();
        for i in 0..n {
            if plan.mask[i] {
                assert_eq!(rows[i], vec![-1.0; 4]);
            } else {
                assert_eq!(rows[i], vals[i * d..(i + 1) * d].to_vec());
            }
        }

        // Content at masked positions never reaches the visible batch.
        let mut other = vals.clone();
        for &i in &plan.masked_indices {
            other[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 1e6);
        }
        let vis2 = apply_mask(&batch(other, n, d), &[plan]).unwrap();
        let a: Vec<f32> = vis.tokens.flatten_all().unwrap().to_vec1().unwrap();
        let b: Vec<f32> = vis2.tokens.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_plan_rejected() {
        let tb = batch(vec![0.0; 16 * 4], 16, 4);
        let plan = sample_mask(4, 1, 0.5, MaskStrategy::IndependentGlobal, 0).unwrap();
        assert!(apply_mask(&tb, &[plan]).is_err());
        let _ = DType::F32;
    }

    fn sample(frames: usize, same: bool) -> TemporalSample {
        let bands = vec!["S0".to_string(), "S1".to_string()];
        let fs = (0..frames)
            .map(|f| {
                let px = (0..2 * 16 * 16)
                    .map(|i| if same { i as f32 } else { (i * (f + 1)) as f32 })
                    .collect();
                SpectralImage::new(16, 16, px, bands.clone()).unwrap()
            })
            .collect();
        let ts = (0..frames).map(|i| Timestamp::date(2016, i as u8).unwrap()).collect();
        TemporalSample::new(fs, ts, Some(1)).unwrap()
    }

    #[test]
    fn crop_modes() {
        let s = sample(3, true);
        let (c, w) = inconsistent_crop(&s, (0.2, 1.0), 8, CropMode::Consistent, 5).unwrap();
        assert!(w.windows(2).all(|p| p[0] == p[1]));
        assert_eq!(c.frames[0], c.frames[1]);
        assert_eq!(c.frames[0].height(), 8);

        let (_, w1) = inconsistent_crop(&s, (0.2, 1.0), 8, CropMode::Inconsistent, 5).unwrap();
        let (_, w2) = inconsistent_crop(&s, (0.2, 1.0), 8, CropMode::Inconsistent, 5).unwrap();
        assert_eq!(w1, w2);

        let (full, _) = inconsistent_crop(&s, (1.0, 1.0), 16, CropMode::Inconsistent, 5).unwrap();
        assert_eq!(full, s);

        assert!(inconsistent_crop(&s, (0.2, 1.0), 32, CropMode::Inconsistent, 5).is_err());
        assert!(inconsistent_crop(&s, (0.0, 1.0), 8, CropMode::Inconsistent, 5).is_err());
    }
}
