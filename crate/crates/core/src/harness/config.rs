//! Run configuration, serialized into every run directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{synthetic_groups, BandPolicy, Dataset};
use crate::error::{ensure, Error, Result};
use crate::masking::{CropMode, MaskStrategy};
use crate::model::{ModelConfig, Variant};
use crate::tokenizer::BandGroupSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Micro,
    Large,
}

/// Architecture choices; anything left `None` comes from the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub variant: Variant,
    pub preset: Preset,
    pub embed_dim: Option<usize>,
    pub depth: Option<usize>,
    pub heads: Option<usize>,
    pub decoder_dim: Option<usize>,
    pub decoder_depth: Option<usize>,
    pub decoder_heads: Option<usize>,
    pub patch_size: Option<usize>,
    /// Sequence length for the temporal variant.
    pub frames: usize,
    pub frames_per_token: usize,
    pub mask_ratio: f64,
    /// Defaults to per-axis for temporal models, global otherwise.
    pub mask_strategy: Option<MaskStrategy>,
    pub bands: BandPolicy,
    /// Band groups for the grouped variant. Defaults to the RGB+NIR / red
    /// edge / SWIR split (or its synthetic analog).
    pub groups: Option<Vec<Vec<String>>>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            variant: Variant::Plain,
            preset: Preset::Micro,
            embed_dim: None,
            depth: None,
            heads: None,
            decoder_dim: None,
            decoder_depth: None,
            decoder_heads: None,
            patch_size: None,
            frames: 3,
            frames_per_token: 1,
            mask_ratio: 0.75,
            mask_strategy: None,
            bands: BandPolicy::Default,
            groups: None,
        }
    }
}

impl ModelSettings {
    /// Resolve against a dataset into a full model configuration.
    pub fn resolve(&self, dataset: &Dataset, num_classes: Option<usize>) -> Result<ModelConfig> {
        let manifest = dataset.manifest();
        let bands = self.bands.resolve(&manifest.bands)?;
        let mut cfg = match self.preset {
            Preset::Micro => ModelConfig::micro(self.variant, manifest.image_size, bands.clone())?,
            Preset::Large => ModelConfig::large(self.variant, manifest.image_size, bands.clone())?,
        };
        if let Some(p) = self.patch_size {
            cfg.patch_size = p;
        }
        let widths = (
            self.embed_dim.unwrap_or(cfg.embed_dim),
            self.depth.unwrap_or(cfg.depth),
            self.heads.unwrap_or(cfg.heads),
            self.decoder_dim.unwrap_or(cfg.decoder_dim),
            self.decoder_depth.unwrap_or(cfg.decoder_depth),
            self.decoder_heads.unwrap_or(cfg.decoder_heads),
        );
        cfg = cfg.with_widths(widths.0, widths.1, widths.2, widths.3, widths.4, widths.5)?;
        if self.variant == Variant::Temporal {
            cfg.frames = self.frames;
            cfg.frames_per_token = self.frames_per_token;
        }
        cfg.mask_ratio = self.mask_ratio;
        if let Some(s) = self.mask_strategy {
            cfg.mask_strategy = s;
        }
        cfg.min_year = manifest.resolved_min_year();
        cfg.num_classes = num_classes;
        if self.variant == Variant::SpectralGroup {
            let groups = match &self.groups {
                Some(g) => BandGroupSpec::new(g.clone())?,
                None if bands.iter().all(|b| b.starts_with('S')) => synthetic_groups(bands.len())?,
                None => crate::data::default_groups(),
            };
            cfg = cfg.with_groups(groups)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSettings {
    pub enabled: bool,
    /// Area fraction range of the random resized crop.
    pub crop_scale: (f64, f64),
    /// Temporal samples: one window for all frames or one per frame.
    pub crop_mode: CropMode,
    pub hflip: bool,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            crop_scale: (0.2, 1.0),
            crop_mode: CropMode::Inconsistent,
            hflip: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub model: ModelSettings,
    pub epochs: usize,
    /// Micro-batch size.
    pub batch_size: usize,
    /// Micro-batches per optimizer step.
    pub accum_steps: usize,
    /// Learning rate per 256 samples of effective batch.
    pub base_lr: f64,
    /// Floor reached by the cosine schedule at the final step.
    pub min_lr: f64,
    pub warmup_epochs: f64,
    pub weight_decay: f64,
    /// Per-block learning-rate decay for finetuning (1.0 disables).
    pub layer_decay: f64,
    pub seed: u64,
    /// Data-loading threads. Results do not depend on this value.
    pub workers: usize,
    pub augment: AugmentSettings,
    pub tta: bool,
    /// Save a numbered checkpoint every this many epochs (0: only `last`).
    pub checkpoint_every: usize,
    /// Pretrained checkpoint for finetuning, probing or evaluation.
    pub init: Option<PathBuf>,
    pub train_split: String,
    pub val_split: String,
    /// Continue from `out_dir/last.ckpt`.
    pub resume: bool,
    /// Stop after this many epochs even if `epochs` is larger (simulates an
    /// interrupted run; not part of the run identity).
    pub stop_after: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
            model: ModelSettings::default(),
            epochs: 20,
            batch_size: 64,
            accum_steps: 1,
            base_lr: 1.5e-4,
            min_lr: 0.0,
            warmup_epochs: 2.0,
            weight_decay: 0.05,
            layer_decay: 0.75,
            seed: 0,
            workers: 1,
            augment: AugmentSettings::default(),
            tta: false,
            checkpoint_every: 0,
            init: None,
            train_split: "train".into(),
            val_split: "val".into(),
            resume: false,
            stop_after: None,
        }
    }
}

/// Keys that may differ between a run and its resumption.
const VOLATILE_KEYS: [&str; 4] = ["resume", "stop_after", "workers", "out_dir"];

impl RunConfig {
    /// Finetuning defaults: higher learning rate, layer decay on.
    pub fn finetune_defaults() -> Self {
        Self {
            epochs: 10,
            base_lr: 1e-3,
            warmup_epochs: 1.0,
            ..Self::default()
        }
    }

    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.accum_steps
    }

    /// Peak learning rate: `base_lr * effective_batch / 256`.
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.effective_batch() as f64 / 256.0
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be positive");
        ensure!(self.batch_size >= 1 && self.accum_steps >= 1, "batch size and accumulation must be positive");
        ensure!(self.base_lr > 0.0 && self.min_lr >= 0.0, "learning rates must be non-negative");
        ensure!(self.warmup_epochs >= 0.0, "warmup must be non-negative");
        ensure!(
            self.layer_decay > 0.0 && self.layer_decay <= 1.0,
            "layer decay {} outside (0, 1]",
            self.layer_decay
        );
        ensure!(self.workers >= 1, "need at least one worker");
        let (lo, hi) = self.augment.crop_scale;
        ensure!(lo > 0.0 && lo <= hi && hi <= 1.0, "crop scale ({lo}, {hi}) invalid");
        Ok(())
    }

    /// Read a JSON or TOML config file (by extension; JSON otherwise).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// The run identity: every field except the volatile ones.
    pub fn identity(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            for k in VOLATILE_KEYS {
                obj.remove(k);
            }
        }
        Ok(v)
    }

    /// Fail with a config conflict naming every differing field.
    pub fn check_resumable(&self, stored: &serde_json::Value) -> Result<()> {
        let mine = self.identity()?;
        let (Some(a), Some(b)) = (mine.as_object(), stored.as_object()) else {
            return Err(Error::ConfigConflict("stored run configuration is not an object".into()));
        };
        let mut diffs: Vec<String> = a
            .iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect();
        diffs.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
        if diffs.is_empty() {
            Ok(())
        } else {
            diffs.sort();
            diffs.dedup();
            Err(Error::ConfigConflict(format!(
                "resume configuration differs in: {}",
                diffs.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            epochs: 3,
            seed: 9,
            ..RunConfig::default()
        };
        let j = dir.path().join("c.json");
        cfg.save(&j).unwrap();
        assert_eq!(RunConfig::from_file(&j).unwrap(), cfg);
        let t = dir.path().join("c.toml");
        fs::write(&t, "epochs = 3\nseed = 9\n[model]\nvariant = \"spectral_group\"\n").unwrap();
        let back = RunConfig::from_file(&t).unwrap();
        assert_eq!(back.epochs, 3);
        assert_eq!(back.model.variant, Variant::SpectralGroup);
        assert_eq!(back.batch_size, 64);
    }

    #[test]
    fn resume_conflicts_are_named() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.resume = true;
        b.stop_after = Some(1);
        a.check_resumable(&b.identity().unwrap()).unwrap();
        b.base_lr = 1.0;
        b.seed = 4;
        match a.check_resumable(&b.identity().unwrap()) {
            Err(Error::ConfigConflict(msg)) => assert!(msg.contains("base_lr") && msg.contains("seed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn peak_lr_scales_with_batch() {
        let cfg = RunConfig {
            batch_size: 32,
            accum_steps: 4,
            base_lr: 1e-3,
            ..RunConfig::default()
        };
        assert!((cfg.peak_lr() - 5e-4).abs() < 1e-15);
    }
}
