use candle_core::{DType, Device, Tensor, D};

use super::config::{ModelConfig, Variant};
use crate::encodings::{interpolate_spatial_encoding, spatial_encode_2d, Matrix};
use crate::error::{ensure, Error, Result};
use crate::masking::{apply_mask, mask_tensor, restore_with_fill, sample_batch_masks, MaskPlan};
use crate::nn::{Block, LayerNorm, Linear, ParamStore};
use crate::rng::{stream_rng, Stream};
use crate::tokenizer::{
    build_token_batch, patchify, patchify_temporal, slice_groups, AxisInfo, EmbeddingId, Patches, PatchEmbedding,
    SpectralImage, TemporalSample, TokenBatch,
};

/// One model input.
#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Image(SpectralImage),
    Temporal(TemporalSample),
}

impl Sample {
    pub fn height(&self) -> usize {
        match self {
            Sample::Image(i) => i.height(),
            Sample::Temporal(t) => t.frames[0].height(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Sample::Image(i) => i.width(),
            Sample::Temporal(t) => t.frames[0].width(),
        }
    }
}

/// Patchified batch: one `[B, L, width]` tensor per axis slice.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub axes: Vec<Tensor>,
    pub infos: Vec<AxisInfo>,
    pub grid: (usize, usize),
}

impl ModelInput {
    pub fn batch_size(&self) -> usize {
        self.infos.len()
    }

    pub fn tokens_per_axis(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn num_tokens(&self) -> usize {
        self.axes.len() * self.tokens_per_axis()
    }
}

/// Which parts to build besides the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Parts {
    pub decoder: bool,
    pub head: bool,
}

impl Parts {
    pub const PRETRAIN: Parts = Parts { decoder: true, head: false };
    pub const CLASSIFY: Parts = Parts { decoder: false, head: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyMode {
    /// Gradients reach every encoder weight.
    Finetune,
    /// Features are detached; only the head learns.
    LinearProbe,
}

struct Decoder {
    embed: Linear,
    mask_token: Tensor,
    blocks: Vec<Block>,
    norm: LayerNorm,
    heads: Vec<Linear>,
}

/// Output of a pre-training forward pass.
pub struct PretrainOutput {
    pub loss: Tensor,
    pub plans: Vec<MaskPlan>,
    /// Per axis slice, `[B, L, width]`.
    pub predictions: Vec<Tensor>,
}

/// Masked autoencoder over patch tokens with an optional classification head.
pub struct MaskedAutoencoder {
    config: ModelConfig,
    store: ParamStore,
    patch_embed: PatchEmbedding,
    cls_token: Tensor,
    blocks: Vec<Block>,
    norm: LayerNorm,
    decoder: Option<Decoder>,
    head: Option<Linear>,
    spatial: Matrix,
    decoder_spatial: Matrix,
}

impl MaskedAutoencoder {
    pub fn new(config: ModelConfig, parts: Parts, dtype: DType, device: &Device, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(dtype, device.clone());
        let mut rng = stream_rng(seed, Stream::Init, &[]);
        let d = config.embed_dim;
        let widths = config.patch_widths();
        let patch_embed = if config.shared_embedding() {
            PatchEmbedding::shared(&mut store, "encoder.patch_embed", widths[0], d, &mut rng)?
        } else {
            PatchEmbedding::grouped(&mut store, "encoder.patch_embed", &widths, d, &mut rng)?
        };
        let cls_token = store.trunc_normal("encoder.cls_token", &[d], &mut rng, false)?;
        let blocks = (0..config.depth)
            .map(|i| Block::new(&mut store, &format!("encoder.blocks.{i}"), d, config.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(&mut store, "encoder.norm", d)?;

        let decoder = if parts.decoder {
            let dd = config.decoder_dim;
            let embed = Linear::new(&mut store, "decoder.embed", d, dd, &mut rng)?;
            let mask_token = store.trunc_normal("decoder.mask_token", &[dd], &mut rng, false)?;
            let blocks = (0..config.decoder_depth)
                .map(|i| Block::new(&mut store, &format!("decoder.blocks.{i}"), dd, config.decoder_heads, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let norm = LayerNorm::new(&mut store, "decoder.norm", dd)?;
            let head_widths: Vec<usize> = if config.shared_embedding() { vec![widths[0]] } else { widths.clone() };
            let heads = head_widths
                .iter()
                .enumerate()
                .map(|(j, &w)| Linear::new(&mut store, &format!("decoder.pred.{j}"), dd, w, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Some(Decoder {
                embed,
                mask_token,
                blocks,
                norm,
                heads,
            })
        } else {
            None
        };

        let head = if parts.head {
            let k = config
                .num_classes
                .ok_or_else(|| Error::invalid("classification head requires num_classes"))?;
            ensure!(k >= 1, "classification head needs at least one class");
            Some(Linear::new(&mut store, "head", d, k, &mut rng)?)
        } else {
            None
        };

        let (gh, gw) = config.grid();
        let spatial = spatial_encode_2d(gh, gw, config.layout.spatial_dims, config.layout.base)?;
        let decoder_spatial = spatial_encode_2d(gh, gw, config.decoder_layout.spatial_dims, config.decoder_layout.base)?;
        Ok(Self {
            config,
            store,
            patch_embed,
            cls_token,
            blocks,
            norm,
            decoder,
            head,
            spatial,
            decoder_spatial,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn has_decoder(&self) -> bool {
        self.decoder.is_some()
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    /// Decoder output width of each head.
    pub fn decoder_head_widths(&self) -> Vec<usize> {
        self.decoder
            .as_ref()
            .map(|d| d.heads.iter().map(Linear::out_dim).collect())
            .unwrap_or_default()
    }

    /// Encoder depth index for layer-wise learning-rate decay: 0 for the
    /// embedding and class token, `i + 1` for block `i`, `depth + 1` for
    /// everything after the blocks. `None` for decoder parameters.
    pub fn layer_id(&self, name: &str) -> Option<usize> {
        if name.starts_with("decoder.") {
            return None;
        }
        if name.starts_with("encoder.patch_embed") || name == "encoder.cls_token" {
            return Some(0);
        }
        if let Some(rest) = name.strip_prefix("encoder.blocks.") {
            let idx: usize = rest.split('.').next()?.parse().ok()?;
            return Some(idx + 1);
        }
        Some(self.config.depth + 1)
    }

    fn check_bands(&self, image: &SpectralImage) -> Result<SpectralImage> {
        if image.band_ids() == self.config.bands.as_slice() {
            return Ok(image.clone());
        }
        image.select(&self.config.bands)
    }

    /// Patchify samples into per-axis tensors in the model dtype.
    pub fn prepare(&self, samples: &[Sample]) -> Result<ModelInput> {
        ensure!(!samples.is_empty(), "empty batch");
        let p = self.config.patch_size;
        let (h, w) = (samples[0].height(), samples[0].width());
        ensure!(
            h % p == 0 && w % p == 0,
            "input {h}x{w} not divisible by patch size {p}"
        );
        let grid = (h / p, w / p);
        let axes = self.config.axes();
        let mut per_axis: Vec<Vec<f32>> = vec![Vec::new(); axes];
        let mut infos = Vec::with_capacity(samples.len());
        let widths = self.config.patch_widths();
        for s in samples {
            ensure!(
                s.height() == h && s.width() == w,
                "all samples of a batch must share one image size"
            );
            let (slices, info): (Vec<Patches>, AxisInfo) = match (self.config.variant, s) {
                (Variant::Plain | Variant::SpectralStack, Sample::Image(img)) => {
                    (vec![patchify(&self.check_bands(img)?, p)?], AxisInfo::Single)
                }
                (Variant::SpectralGroup, Sample::Image(img)) => {
                    let groups = self.config.band_groups.as_ref().expect("validated");
                    let parts = slice_groups(img, groups)?;
                    let slices = parts.iter().map(|g| patchify(g, p)).collect::<Result<Vec<_>>>()?;
                    (slices, AxisInfo::Groups(groups.len()))
                }
                (Variant::Temporal, Sample::Temporal(seq)) => {
                    ensure!(
                        seq.len() == self.config.frames,
                        "temporal model expects {} frames, got {}",
                        self.config.frames,
                        seq.len()
                    );
                    let frames = seq.frames.iter().map(|f| self.check_bands(f)).collect::<Result<Vec<_>>>()?;
                    let seq = TemporalSample::new(frames, seq.timestamps.clone(), seq.label)?;
                    let pt = self.config.frames_per_token;
                    let all = patchify_temporal(&seq, p, pt)?;
                    let l = grid.0 * grid.1;
                    let slices = (0..axes)
                        .map(|a| Patches::new(l, all.cols(), all.as_slice()[a * l * all.cols()..(a + 1) * l * all.cols()].to_vec()))
                        .collect::<Result<Vec<_>>>()?;
                    let timestamps = seq.timestamps.iter().step_by(pt).copied().collect();
                    (
                        slices,
                        AxisInfo::Frames {
                            timestamps,
                            min_year: self.config.min_year,
                        },
                    )
                }
                (variant, _) => {
                    return Err(Error::invalid(format!(
                        "sample kind does not match the {variant:?} model variant"
                    )))
                }
            };
            for (a, sl) in slices.into_iter().enumerate() {
                ensure!(
                    sl.cols() == widths[a],
                    "axis {a} patch width {} differs from the model's {}",
                    sl.cols(),
                    widths[a]
                );
                per_axis[a].extend_from_slice(sl.as_slice());
            }
            infos.push(info);
        }
        let b = samples.len();
        let l = grid.0 * grid.1;
        let axes = per_axis
            .into_iter()
            .zip(&widths)
            .map(|(v, &wd)| Ok(Tensor::from_vec(v, (b, l, wd), self.device())?.to_dtype(self.dtype())?))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelInput { axes, infos, grid })
    }

    fn spatial_for(&self, table: &Matrix, grid: (usize, usize)) -> Result<Option<Matrix>> {
        let own = self.config.grid();
        if grid == own {
            return Ok(Some(table.clone()));
        }
        Ok(Some(interpolate_spatial_encoding(table, own, grid)?))
    }

    /// Embed every patch and attach composed encodings. Spatial encodings
    /// are interpolated when the input grid differs from the configured one.
    pub fn embed(&self, input: &ModelInput) -> Result<TokenBatch> {
        let embedded = if self.patch_embed.is_shared() {
            let all = Tensor::cat(&input.axes, 1)?;
            self.patch_embed.embed(&all, EmbeddingId::Shared)?
        } else {
            let parts = input
                .axes
                .iter()
                .enumerate()
                .map(|(j, a)| self.patch_embed.embed(a, EmbeddingId::Group(j)))
                .collect::<Result<Vec<_>>>()?;
            Tensor::cat(&parts, 1)?
        };
        let spatial = self.spatial_for(&self.spatial, input.grid)?;
        build_token_batch(embedded, input.grid, &self.config.layout, &input.infos, spatial.as_ref())
    }

    fn prepend_cls(&self, x: &Tensor, cls: &Tensor) -> Result<Tensor> {
        let (b, _, d) = x.dims3()?;
        let cls = cls.reshape((1, 1, d))?.broadcast_as((b, 1, d))?;
        Ok(Tensor::cat(&[&cls, x], 1)?)
    }

    /// Encode visible tokens. Output is `[B, 1 + K, D]` with the class token
    /// (which carries no positional encoding) first.
    pub fn encode(&self, visible: &TokenBatch) -> Result<Tensor> {
        ensure!(visible.num_tokens() > 0, "cannot encode an empty visible set");
        let x = self.prepend_cls(&visible.encoded()?, &self.cls_token)?;
        let x = self.blocks.iter().try_fold(x, |x, b| b.forward(&x))?;
        self.norm.forward(&x)
    }

    /// Reconstruct every token from the latent of the visible ones. Returns
    /// one `[B, L, width]` prediction per axis slice.
    pub fn decode(&self, latent: &Tensor, plans: &[MaskPlan], input: &ModelInput) -> Result<Vec<Tensor>> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::InvalidState("model has no decoder".into()))?;
        let (b, k1, _) = latent.dims3()?;
        let n = input.num_tokens();
        ensure!(plans.len() == b, "{} plans for a batch of {b}", plans.len());
        ensure!(
            plans.iter().all(|p| p.len() == n && p.num_visible() + 1 == k1),
            "mask plans are inconsistent with the latent of {} visible tokens over {n}",
            k1 - 1
        );
        let y = dec.embed.forward(latent)?;
        let dd = self.config.decoder_dim;
        let cls = y.narrow(1, 0, 1)?;
        let vis = y.narrow(1, 1, k1 - 1)?;
        let full = restore_with_fill(&vis, &dec.mask_token, plans)?;
        let spatial = self.spatial_for(&self.decoder_spatial, input.grid)?;
        let dummy = Tensor::zeros((b, n, dd), self.dtype(), self.device())?;
        let enc = build_token_batch(dummy, input.grid, &self.config.decoder_layout, &input.infos, spatial.as_ref())?.encoding;
        let full = (full + enc)?;
        let x = Tensor::cat(&[&cls, &full], 1)?;
        let x = dec.blocks.iter().try_fold(x, |x, blk| blk.forward(&x))?;
        let x = dec.norm.forward(&x)?.narrow(1, 1, n)?;
        let l = input.tokens_per_axis();
        (0..input.axes.len())
            .map(|a| {
                let head = if dec.heads.len() == 1 { &dec.heads[0] } else { &dec.heads[a] };
                head.forward(&x.narrow(1, a * l, l)?)
            })
            .collect()
    }

    /// Loss, predictions and plans for a batch under explicit mask plans.
    pub fn forward_pretrain_with(&self, input: &ModelInput, plans: Vec<MaskPlan>) -> Result<PretrainOutput> {
        let tokens = self.embed(input)?;
        let visible = apply_mask(&tokens, &plans)?;
        let latent = self.encode(&visible)?;
        let predictions = self.decode(&latent, &plans, input)?;
        let mask = mask_tensor(&plans, &predictions[0])?;
        let loss = reconstruction_loss(&predictions, &input.axes, &mask)?;
        Ok(PretrainOutput {
            loss,
            plans,
            predictions,
        })
    }

    /// Sample per-example masks from `seed` and run the pre-training pass.
    pub fn forward_pretrain(&self, input: &ModelInput, seed: u64) -> Result<PretrainOutput> {
        let plans = sample_batch_masks(
            input.batch_size(),
            input.tokens_per_axis(),
            input.axes.len(),
            self.config.mask_ratio,
            self.config.mask_strategy,
            seed,
        )?;
        self.forward_pretrain_with(input, plans)
    }

    /// Pooled features: encoder over all tokens, mean of the patch tokens
    /// (class token excluded). `[B, D]`
    pub fn features(&self, input: &ModelInput) -> Result<Tensor> {
        let tokens = self.embed(input)?;
        let latent = self.encode(&tokens)?;
        let n = tokens.num_tokens();
        Ok(latent.narrow(1, 1, n)?.mean(1)?)
    }

    /// Class logits `[B, num_classes]`.
    pub fn forward_classify(&self, input: &ModelInput, mode: ClassifyMode) -> Result<Tensor> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::InvalidState("model has no classification head".into()))?;
        let feats = self.features(input)?;
        let feats = match mode {
            ClassifyMode::Finetune => feats,
            ClassifyMode::LinearProbe => feats.detach(),
        };
        head.forward(&feats)
    }

    /// Logits from precomputed features.
    pub fn classify_features(&self, features: &Tensor) -> Result<Tensor> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::InvalidState("model has no classification head".into()))?;
        head.forward(features)
    }
}

/// Mean over masked tokens of each token's mean squared pixel error.
/// `predictions` and `targets` hold one `[B, L, width]` tensor per axis
/// slice; `mask` is `[B, N]` with 1.0 at masked tokens.
pub fn reconstruction_loss(predictions: &[Tensor], targets: &[Tensor], mask: &Tensor) -> Result<Tensor> {
    ensure!(
        predictions.len() == targets.len() && !predictions.is_empty(),
        "{} prediction slices for {} target slices",
        predictions.len(),
        targets.len()
    );
    let per_token = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            ensure!(p.dims() == t.dims(), "prediction {:?} and target {:?} differ", p.dims(), t.dims());
            // True division (not a reciprocal multiply) keeps the mean exact
            // whenever the squared errors sum exactly.
            let w = Tensor::full(p.dim(D::Minus1)? as f64, (), p.device())?.to_dtype(p.dtype())?;
            Ok((p - t)?.sqr()?.sum(D::Minus1)?.broadcast_div(&w)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_token = Tensor::cat(&per_token, 1)?;
    ensure!(
        per_token.dims() == mask.dims(),
        "mask {:?} does not cover {:?} tokens",
        mask.dims(),
        per_token.dims()
    );
    let masked: f64 = mask.to_dtype(DType::F64)?.sum_all()?.to_scalar()?;
    ensure!(masked > 0.0, "reconstruction loss needs at least one masked token");
    let count = Tensor::full(masked, (), mask.device())?.to_dtype(per_token.dtype())?;
    Ok((per_token * mask)?.sum_all()?.broadcast_div(&count)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_groups, synthetic_groups};
    use crate::encodings::Timestamp;
    use crate::masking::{MaskStrategy, sample_mask};
    use rand::Rng as _;

    fn bands(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("S{i}")).collect()
    }

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> SpectralImage {
        let mut rng = stream_rng(seed, Stream::Generate, &[]);
        let px = (0..c * h * w).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        SpectralImage::new(h, w, px, bands(c)).unwrap()
    }

    fn tiny(variant: Variant, c: usize, parts: Parts) -> MaskedAutoencoder {
        let mut cfg = ModelConfig::micro(variant, [8, 8], bands(c))
            .unwrap()
            .with_widths(32, 2, 2, if variant == Variant::Temporal { 32 } else { 16 }, 1, 2)
            .unwrap();
        cfg.patch_size = 4;
        if variant == Variant::SpectralGroup {
            cfg = cfg.with_groups(synthetic_groups(c).unwrap()).unwrap();
        }
        cfg.num_classes = Some(5);
        MaskedAutoencoder::new(cfg, parts, DType::F64, &Device::Cpu, 0).unwrap()
    }

    #[test]
    fn grouped_default_shapes() {
        let ten = default_groups().bands();
        let mut cfg = ModelConfig::micro(Variant::SpectralGroup, [96, 96], ten.clone())
            .unwrap()
            .with_groups(default_groups())
            .unwrap()
            .with_widths(32, 1, 2, 16, 1, 2)
            .unwrap();
        cfg.mask_strategy = MaskStrategy::IndependentPerAxis;
        let m = MaskedAutoencoder::new(cfg, Parts::PRETRAIN, DType::F32, &Device::Cpu, 0).unwrap();
        let img = SpectralImage::zeros(96, 96, ten).unwrap();
        let input = m.prepare(&[Sample::Image(img)]).unwrap();
        assert_eq!(input.num_tokens(), 432);
        let out = m.forward_pretrain(&input, 1).unwrap();
        assert_eq!(out.plans[0].num_visible(), 108);
        let dims: Vec<_> = out.predictions.iter().map(|p| p.dims().to_vec()).collect();
        assert_eq!(dims, vec![vec![1, 144, 256], vec![1, 144, 256], vec![1, 144, 128]]);
        assert_eq!(m.decoder_head_widths(), vec![256, 256, 128]);
    }

    #[test]
    fn encode_output_has_class_token() {
        let m = tiny(Variant::Plain, 3, Parts::PRETRAIN);
        let input = m.prepare(&[Sample::Image(random_image(3, 8, 8, 1))]).unwrap();
        let tokens = m.embed(&input).unwrap();
        let plan = sample_mask(4, 1, 0.75, MaskStrategy::IndependentGlobal, 3).unwrap();
        let vis = apply_mask(&tokens, &[plan]).unwrap();
        assert_eq!(m.encode(&vis).unwrap().dims(), &[1, 2, 32]);
    }

    #[test]
    fn pretrain_loss_finite_and_deterministic() {
        for variant in [Variant::Plain, Variant::SpectralGroup] {
            let m = tiny(variant, 4, Parts::PRETRAIN);
            let input = m.prepare(&[Sample::Image(random_image(4, 8, 8, 2))]).unwrap();
            let a: f64 = m.forward_pretrain(&input, 5).unwrap().loss.to_scalar().unwrap();
            let b: f64 = m.forward_pretrain(&input, 5).unwrap().loss.to_scalar().unwrap();
            assert!(a.is_finite() && a > 0.0);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn temporal_input_and_variant_mismatch() {
        let m = tiny(Variant::Temporal, 2, Parts::PRETRAIN);
        let frames: Vec<_> = (0..3).map(|i| random_image(2, 8, 8, i)).collect();
        let ts = vec![Timestamp::date(2016, 1).unwrap(); 3];
        let seq = TemporalSample::new(frames.clone(), ts, None).unwrap();
        let input = m.prepare(&[Sample::Temporal(seq)]).unwrap();
        assert_eq!(input.num_tokens(), 12);
        assert!(m.forward_pretrain(&input, 0).is_ok());
        assert!(m.prepare(&[Sample::Image(frames[0].clone())]).is_err());
    }

    #[test]
    fn loss_contract() {
        let dev = Device::Cpu;
        let target = Tensor::arange(0f64, 24.0, &dev).unwrap().reshape((1, 4, 6)).unwrap();
        let plan = MaskPlan::from_mask(vec![true, false, true, false], 4, 1, 0.5, MaskStrategy::IndependentGlobal).unwrap();
        let mask = mask_tensor(&[plan], &target).unwrap();
        let loss = |p: &Tensor| -> f64 {
            reconstruction_loss(&[p.clone()], &[target.clone()], &mask).unwrap().to_scalar().unwrap()
        };
        assert_eq!(loss(&target), 0.0);
        let offset = mask.unsqueeze(2).unwrap().broadcast_as((1, 4, 6)).unwrap().affine(0.5, 0.0).unwrap();
        assert_eq!(loss(&(&target + &offset).unwrap()), 0.25);
        let visible = mask.affine(-1.0, 1.0).unwrap().unsqueeze(2).unwrap().broadcast_as((1, 4, 6)).unwrap();
        assert_eq!(loss(&(&target + (visible * 37.0).unwrap()).unwrap()), 0.0);
        let none = Tensor::zeros((1, 4), DType::F64, &dev).unwrap();
        assert!(reconstruction_loss(&[target.clone()], &[target.clone()], &none).is_err());
    }

    #[test]
    fn classify_shapes_and_missing_head() {
        let m = tiny(Variant::Plain, 3, Parts::CLASSIFY);
        let input = m
            .prepare(&[Sample::Image(random_image(3, 8, 8, 1)), Sample::Image(random_image(3, 8, 8, 2))])
            .unwrap();
        assert_eq!(m.forward_classify(&input, ClassifyMode::Finetune).unwrap().dims(), &[2, 5]);
        let p = tiny(Variant::Plain, 3, Parts::PRETRAIN);
        assert!(matches!(
            p.forward_classify(&input, ClassifyMode::Finetune),
            Err(Error::InvalidState(_))
        ));
        assert!(matches!(p.forward_pretrain(&input, 0).map(|_| ()), Ok(())));
    }

    #[test]
    fn probe_gradients_stop_at_head() {
        let m = tiny(Variant::Plain, 3, Parts::CLASSIFY);
        let input = m.prepare(&[Sample::Image(random_image(3, 8, 8, 1))]).unwrap();
        let logits = m.forward_classify(&input, ClassifyMode::LinearProbe).unwrap();
        let grads = logits.sum_all().unwrap().backward().unwrap();
        for (name, p) in m.store().iter() {
            let has = grads.get(p.var.as_tensor()).is_some();
            assert_eq!(has, name.starts_with("head."), "{name}");
        }
    }

    #[test]
    fn interpolated_grid_runs() {
        let m = tiny(Variant::Plain, 3, Parts::CLASSIFY);
        let input = m.prepare(&[Sample::Image(random_image(3, 12, 12, 1))]).unwrap();
        assert_eq!(input.grid, (3, 3));
        assert_eq!(m.forward_classify(&input, ClassifyMode::Finetune).unwrap().dims(), &[1, 5]);
    }

    #[test]
    fn layer_ids() {
        let m = tiny(Variant::Plain, 3, Parts::PRETRAIN);
        assert_eq!(m.layer_id("encoder.cls_token"), Some(0));
        assert_eq!(m.layer_id("encoder.patch_embed.0.weight"), Some(0));
        assert_eq!(m.layer_id("encoder.blocks.1.attn.qkv.weight"), Some(2));
        assert_eq!(m.layer_id("encoder.norm.weight"), Some(3));
        assert_eq!(m.layer_id("head.weight"), Some(3));
        assert_eq!(m.layer_id("decoder.embed.weight"), None);
    }
}
