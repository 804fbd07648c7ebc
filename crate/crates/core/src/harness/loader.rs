//! In-memory split loading, augmentation and deterministic batch order.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::config::AugmentSettings;
use crate::data::{crop_resize, hflip, normalize, random_window, Dataset};
use crate::error::{ensure, Error, Result};
use crate::masking::inconsistent_crop;
use crate::model::{ModelConfig, Sample, Variant};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::tokenizer::{SpectralImage, TemporalSample};

/// One split, normalized and restricted to the model's bands, held in memory.
pub struct SplitLoader<'a> {
    dataset: &'a Dataset,
    split: String,
    variant: Variant,
    frames: usize,
    images: Vec<SpectralImage>,
    labels: Vec<Option<usize>>,
    pool: rayon::ThreadPool,
}

impl<'a> SplitLoader<'a> {
    pub fn new(dataset: &'a Dataset, split: &str, model: &ModelConfig, workers: usize) -> Result<Self> {
        let stats = dataset.stats()?.clone();
        let records = dataset.manifest().split(split)?;
        ensure!(!records.is_empty(), "split {split} is empty");
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidState(format!("cannot start loader threads: {e}")))?;
        let images = pool.install(|| {
            (0..records.len())
                .into_par_iter()
                .map(|i| normalize(&dataset.load(split, i)?.select(&model.bands)?, &stats))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Self {
            dataset,
            split: split.to_string(),
            variant: model.variant,
            frames: model.frames,
            images,
            labels: records.iter().map(|r| r.label).collect(),
            pool,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    /// Labels of `indices`; every sample must be labelled.
    pub fn labels(&self, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| {
                self.labels[i].ok_or_else(|| Error::invalid(format!("sample {i} of split {} has no label", self.split)))
            })
            .collect()
    }

    /// Replace bands (by position in the model band list) with zero, the
    /// normalized band mean.
    pub fn blank_bands(&mut self, positions: &[usize]) {
        for img in &mut self.images {
            for &c in positions {
                img.band_mut(c).fill(0.0);
            }
        }
    }

    /// A permutation of the split for `epoch`.
    pub fn epoch_order(&self, seed: u64, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut stream_rng(seed, Stream::DataOrder, &[epoch as u64]));
        order
    }

    /// One model input. Temporal variants assemble a sequence around the
    /// sample using `assemble_seed`; `augment` carries the settings and a
    /// per-sample seed.
    pub fn sample(&self, i: usize, assemble_seed: u64, augment: Option<(&AugmentSettings, u64)>) -> Result<Sample> {
        match self.variant {
            Variant::Temporal => {
                let chosen = self.dataset.assemble_indices(&self.split, i, self.frames, assemble_seed)?;
                let records = self.dataset.manifest().split(&self.split)?;
                let frames = chosen.iter().map(|&j| self.images[j].clone()).collect();
                let timestamps = chosen.iter().map(|&j| records[j].timestamp).collect();
                let mut seq = TemporalSample::new(frames, timestamps, self.labels[i])?;
                if let Some((aug, seed)) = augment.filter(|(a, _)| a.enabled) {
                    let size = seq.frames[0].height().min(seq.frames[0].width());
                    seq = inconsistent_crop(&seq, aug.crop_scale, size, aug.crop_mode, seed)?.0;
                    if aug.hflip && stream_rng(seed, Stream::Augment, &[1]).gen_bool(0.5) {
                        seq.frames = seq.frames.iter().map(hflip).collect();
                    }
                }
                Ok(Sample::Temporal(seq))
            }
            _ => {
                let mut img = self.images[i].clone();
                if let Some((aug, seed)) = augment.filter(|(a, _)| a.enabled) {
                    let mut rng = stream_rng(seed, Stream::Augment, &[]);
                    let win = random_window(img.height(), img.width(), aug.crop_scale, &mut rng)?;
                    img = crop_resize(&img, &win, img.height(), img.width())?;
                    if aug.hflip && rng.gen_bool(0.5) {
                        img = hflip(&img);
                    }
                }
                Ok(Sample::Image(img))
            }
        }
    }

    /// Samples for `indices`, built in parallel. Each sample's randomness
    /// depends only on `(seed, epoch, index)`, never on the worker count.
    pub fn batch(&self, indices: &[usize], seed: u64, epoch: usize, augment: Option<&AugmentSettings>) -> Result<Vec<Sample>> {
        self.pool.install(|| {
            indices
                .par_iter()
                .map(|&i| {
                    let assemble = derive_seed(seed, Stream::Assemble, &[epoch as u64, i as u64]);
                    let aug = augment.map(|a| (a, derive_seed(seed, Stream::Augment, &[epoch as u64, i as u64])));
                    self.sample(i, assemble, aug)
                })
                .collect()
        })
    }
}
