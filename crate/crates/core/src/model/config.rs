use serde::{Deserialize, Serialize};

use crate::encodings::{EncodingLayout, ExtraKind};
use crate::error::{ensure, Error, Result};
use crate::masking::MaskStrategy;
use crate::tokenizer::BandGroupSpec;

/// How input bands and frames become token slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Single image, all bands in one patch embedding, spatial encoding only.
    Plain,
    /// A sequence of frames sharing one patch embedding, with time encodings.
    Temporal,
    /// All spectral bands stacked into one patch embedding.
    SpectralStack,
    /// One patch embedding per band group, with group encodings.
    SpectralGroup,
}

impl Variant {
    pub fn extra_kind(self) -> ExtraKind {
        match self {
            Variant::Plain | Variant::SpectralStack => ExtraKind::None,
            Variant::Temporal => ExtraKind::Temporal,
            Variant::SpectralGroup => ExtraKind::Group,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "temporal" => Ok(Variant::Temporal),
            "spectral_stack" | "stack" => Ok(Variant::SpectralStack),
            "spectral_group" | "group" => Ok(Variant::SpectralGroup),
            other => Err(Error::invalid(format!("unknown model variant {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub decoder_dim: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub patch_size: usize,
    /// Frames folded into one token (temporal variant).
    pub frames_per_token: usize,
    /// Sequence length (temporal variant), 1 otherwise.
    pub frames: usize,
    /// `[height, width]` the encodings were built for.
    pub image_size: [usize; 2],
    pub bands: Vec<String>,
    pub band_groups: Option<BandGroupSpec>,
    pub mask_ratio: f64,
    pub mask_strategy: MaskStrategy,
    pub min_year: i32,
    pub num_classes: Option<usize>,
    pub layout: EncodingLayout,
    pub decoder_layout: EncodingLayout,
}

impl ModelConfig {
    /// Desk-scale defaults: width 128, 4 blocks, 4 heads; decoder 64 wide,
    /// 2 blocks, 2 heads; patch size 8; mask ratio 0.75.
    pub fn micro(variant: Variant, image_size: [usize; 2], bands: Vec<String>) -> Result<Self> {
        let mut cfg = Self {
            variant,
            embed_dim: 128,
            depth: 4,
            heads: 4,
            decoder_dim: 64,
            decoder_depth: 2,
            decoder_heads: 2,
            patch_size: 8,
            frames_per_token: 1,
            frames: if variant == Variant::Temporal { 3 } else { 1 },
            image_size,
            bands,
            band_groups: None,
            mask_ratio: 0.75,
            mask_strategy: match variant {
                Variant::Temporal => MaskStrategy::IndependentPerAxis,
                _ => MaskStrategy::IndependentGlobal,
            },
            min_year: 0,
            num_classes: None,
            layout: EncodingLayout::spatial(128)?,
            decoder_layout: EncodingLayout::spatial(64)?,
        };
        cfg.relayout()?;
        Ok(cfg)
    }

    /// The ViT-Large encoder with the 512-wide, 8-block decoder.
    pub fn large(variant: Variant, image_size: [usize; 2], bands: Vec<String>) -> Result<Self> {
        let mut cfg = Self::micro(variant, image_size, bands)?;
        cfg.embed_dim = 1024;
        cfg.depth = 24;
        cfg.heads = 16;
        cfg.decoder_dim = 512;
        cfg.decoder_depth = 8;
        cfg.decoder_heads = 16;
        cfg.patch_size = 16;
        cfg.relayout()?;
        Ok(cfg)
    }

    pub fn with_widths(
        mut self,
        embed_dim: usize,
        depth: usize,
        heads: usize,
        decoder_dim: usize,
        decoder_depth: usize,
        decoder_heads: usize,
    ) -> Result<Self> {
        self.embed_dim = embed_dim;
        self.depth = depth;
        self.heads = heads;
        self.decoder_dim = decoder_dim;
        self.decoder_depth = decoder_depth;
        self.decoder_heads = decoder_heads;
        self.relayout()?;
        Ok(self)
    }

    pub fn with_groups(mut self, groups: BandGroupSpec) -> Result<Self> {
        self.band_groups = Some(groups);
        self.validate()?;
        Ok(self)
    }

    /// Recompute both encoding layouts from the widths and variant.
    pub fn relayout(&mut self) -> Result<()> {
        let kind = self.variant.extra_kind();
        self.layout = EncodingLayout::for_kind(self.embed_dim, kind)?;
        self.decoder_layout = EncodingLayout::for_kind(self.decoder_dim, kind)?;
        self.validate_shape()
    }

    /// Full check, including band groups for the grouped variant.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.variant == Variant::SpectralGroup {
            let groups = self
                .band_groups
                .as_ref()
                .ok_or_else(|| Error::invalid("grouped spectral variant requires band groups"))?;
            groups.validate()?;
            for b in groups.bands() {
                ensure!(self.bands.contains(&b), "band group member {b} is not a model band");
            }
        }
        Ok(())
    }

    /// Widths, heads, patch geometry and masking; band groups may still be unset.
    fn validate_shape(&self) -> Result<()> {
        ensure!(
            self.heads > 0 && self.embed_dim % self.heads == 0,
            "encoder width {} not divisible by {} heads",
            self.embed_dim,
            self.heads
        );
        ensure!(
            self.decoder_heads > 0 && self.decoder_dim % self.decoder_heads == 0,
            "decoder width {} not divisible by {} heads",
            self.decoder_dim,
            self.decoder_heads
        );
        ensure!(self.layout.total_dim == self.embed_dim, "encoding layout width differs from encoder width");
        ensure!(
            self.decoder_layout.total_dim == self.decoder_dim,
            "decoder encoding layout width differs from decoder width"
        );
        ensure!(self.patch_size > 0, "patch size must be positive");
        let [h, w] = self.image_size;
        ensure!(
            h % self.patch_size == 0 && w % self.patch_size == 0,
            "image size {h}x{w} not divisible by patch size {}",
            self.patch_size
        );
        ensure!(!self.bands.is_empty(), "model needs at least one band");
        ensure!(
            self.mask_ratio > 0.0 && self.mask_ratio < 1.0,
            "mask ratio {} outside (0, 1)",
            self.mask_ratio
        );
        ensure!(self.frames_per_token >= 1 && self.frames >= 1, "frame counts must be positive");
        ensure!(
            self.frames % self.frames_per_token == 0,
            "frames per token {} does not divide {} frames",
            self.frames_per_token,
            self.frames
        );
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.image_size[0] / self.patch_size, self.image_size[1] / self.patch_size)
    }

    pub fn tokens_per_axis(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    /// Number of token slices: frame groups, band groups or 1.
    pub fn axes(&self) -> usize {
        match self.variant {
            Variant::Temporal => self.frames / self.frames_per_token,
            Variant::SpectralGroup => self.band_groups.as_ref().map_or(1, BandGroupSpec::len),
            Variant::Plain | Variant::SpectralStack => 1,
        }
    }

    pub fn num_tokens(&self) -> usize {
        self.axes() * self.tokens_per_axis()
    }

    /// Bands consumed by the model, in embedding order.
    pub fn input_bands(&self) -> Vec<String> {
        match (&self.variant, &self.band_groups) {
            (Variant::SpectralGroup, Some(g)) => g.bands(),
            _ => self.bands.clone(),
        }
    }

    /// Patch row width of each axis slice (also the decoder output widths).
    pub fn patch_widths(&self) -> Vec<usize> {
        let p2 = self.patch_size * self.patch_size;
        match self.variant {
            Variant::Plain | Variant::SpectralStack => vec![p2 * self.bands.len()],
            Variant::Temporal => vec![self.frames_per_token * p2 * self.bands.len(); self.axes()],
            Variant::SpectralGroup => self
                .band_groups
                .as_ref()
                .map(|g| g.sizes().iter().map(|s| s * p2).collect())
                .unwrap_or_default(),
        }
    }

    /// Whether one projection serves every slice.
    pub fn shared_embedding(&self) -> bool {
        self.variant != Variant::SpectralGroup
    }

    /// Compatibility for loading weights: everything except class count,
    /// masking and year origin must agree.
    pub fn architecture_matches(&self, other: &ModelConfig) -> bool {
        self.variant == other.variant
            && self.embed_dim == other.embed_dim
            && self.depth == other.depth
            && self.heads == other.heads
            && self.patch_size == other.patch_size
            && self.frames_per_token == other.frames_per_token
            && self.input_bands() == other.input_bands()
            && self.band_groups == other.band_groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_groups;

    fn ten_bands() -> Vec<String> {
        default_groups().bands()
    }

    #[test]
    fn grouped_geometry() {
        let cfg = ModelConfig::micro(Variant::SpectralGroup, [96, 96], ten_bands())
            .unwrap()
            .with_groups(default_groups())
            .unwrap();
        assert_eq!(cfg.tokens_per_axis(), 144);
        assert_eq!(cfg.num_tokens(), 432);
        assert_eq!(cfg.patch_widths(), vec![256, 256, 128]);
    }

    #[test]
    fn group_variant_requires_groups() {
        let cfg = ModelConfig::micro(Variant::SpectralGroup, [32, 32], ten_bands()).unwrap();
        assert!(cfg.validate().is_err());
        assert!(cfg.with_groups(default_groups()).is_ok());
    }

    #[test]
    fn rejects_bad_heads() {
        let cfg = ModelConfig::micro(Variant::Plain, [32, 32], vec!["S0".into()]).unwrap();
        assert!(cfg.with_widths(130, 1, 4, 64, 1, 2).is_err());
    }

    #[test]
    fn large_preset_layouts() {
        let cfg = ModelConfig::large(Variant::Temporal, [224, 224], vec!["R".into(), "G".into(), "B".into()]).unwrap();
        assert_eq!((cfg.layout.spatial_dims, cfg.layout.extra_dims), (640, 384));
        assert_eq!(cfg.num_tokens(), 588);
    }
}
