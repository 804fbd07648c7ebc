//! Evaluation with optional test-time augmentation, and band ablation.

use std::path::Path;

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

use super::loader::SplitLoader;
use super::metrics::{majority_rate, score, ClassificationMetrics};
use crate::data::Dataset;
use crate::error::{ensure, Error, Result};
use crate::model::{Checkpoint, CheckpointKind, ClassifyMode, MaskedAutoencoder, Parts, Variant};
use crate::nn::softmax_last;

/// Resampled sequence assemblies averaged under test-time augmentation.
pub const TTA_SAMPLES: usize = 9;

/// Softmax scores for every sample of `loader`. With `tta`, temporal models
/// average the scores of [`TTA_SAMPLES`] sequence assemblies; other
/// variants have nothing to resample and run once.
pub fn predict(model: &MaskedAutoencoder, loader: &SplitLoader, batch: usize, tta: bool, seed: u64) -> Result<Vec<Vec<f64>>> {
    let rounds = if tta && model.config().variant == Variant::Temporal {
        TTA_SAMPLES
    } else {
        1
    };
    let idx: Vec<usize> = (0..loader.len()).collect();
    let mut sums: Vec<Vec<f64>> = Vec::with_capacity(loader.len());
    for round in 0..rounds {
        let mut row = 0;
        for chunk in idx.chunks(batch.max(1)) {
            let samples = loader.batch(chunk, seed, round, None)?;
            let logits = model.forward_classify(&model.prepare(&samples)?, ClassifyMode::Finetune)?;
            let probs: Vec<Vec<f32>> = softmax_last(&logits.detach())?.to_dtype(DType::F32)?.to_vec2()?;
            for p in probs {
                if round == 0 {
                    sums.push(p.iter().map(|&v| v as f64).collect());
                } else {
                    for (s, v) in sums[row].iter_mut().zip(p) {
                        *s += v as f64;
                    }
                }
                row += 1;
            }
        }
    }
    if rounds > 1 {
        for r in &mut sums {
            for v in r.iter_mut() {
                *v /= rounds as f64;
            }
        }
    }
    Ok(sums)
}

pub fn scores_to_metrics(scores: &[Vec<f64>], labels: &[usize], class_names: &[String]) -> Result<ClassificationMetrics> {
    score(scores, labels, class_names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub split: String,
    pub tta: bool,
    pub seed: u64,
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            split: "val".into(),
            tta: false,
            seed: 0,
            batch_size: 64,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tta: bool,
    pub metrics: ClassificationMetrics,
    pub majority_rate: f64,
}

/// Rebuild a classifier from a checkpoint carrying a head.
pub fn load_classifier(checkpoint: &Path, dataset: &Dataset) -> Result<MaskedAutoencoder> {
    let ck = Checkpoint::load(checkpoint)?;
    if ck.kind() != CheckpointKind::Classifier || !ck.tensors.contains_key("head.weight") {
        return Err(Error::InvalidState(format!(
            "{} has no classification head",
            checkpoint.display()
        )));
    }
    let cfg = ck.config().clone();
    let k = dataset.manifest().num_classes();
    ensure!(
        cfg.num_classes == Some(k),
        "checkpoint head has {:?} classes but the dataset has {k}",
        cfg.num_classes
    );
    for b in &cfg.bands {
        ensure!(
            dataset.manifest().bands.contains(b),
            "dataset lacks band {b} required by the checkpoint"
        );
    }
    let model = MaskedAutoencoder::new(cfg, Parts::CLASSIFY, DType::F32, &Device::Cpu, 0)?;
    ck.load_into(&model, |_| true)?;
    Ok(model)
}

fn evaluate_loaded(model: &MaskedAutoencoder, ds: &Dataset, loader: &SplitLoader, opts: &EvalOptions) -> Result<EvalReport> {
    let labels = loader.labels(&(0..loader.len()).collect::<Vec<_>>())?;
    let scores = predict(model, loader, opts.batch_size, opts.tta, opts.seed)?;
    let names = &ds.manifest().class_names;
    Ok(EvalReport {
        tta: opts.tta,
        metrics: score(&scores, &labels, names)?,
        majority_rate: majority_rate(&labels, names.len()),
    })
}

/// Top-1, top-5 and per-class accuracy of a classifier checkpoint.
pub fn evaluate(checkpoint: &Path, dataset: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let ds = Dataset::open(dataset)?;
    let model = load_classifier(checkpoint, &ds)?;
    let loader = SplitLoader::new(&ds, &opts.split, model.config(), opts.workers)?;
    evaluate_loaded(&model, &ds, &loader, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Bands replaced by their mean; empty for the baseline.
    pub masked: Vec<String>,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub majority_rate: f64,
}

impl AblationTable {
    /// Plain-text table: one row for the baseline and one per subset.
    pub fn render(&self) -> String {
        let mut out = String::from("masked bands                     top1     top5\n");
        for r in &self.rows {
            let label = if r.masked.is_empty() {
                "None".to_string()
            } else {
                r.masked.join(",")
            };
            out.push_str(&format!("{label:<30} {:>7.2}  {:>7.2}\n", 100.0 * r.top1, 100.0 * r.top5));
        }
        out
    }
}

/// Accuracy with each subset of bands replaced by its mean (zero after
/// normalization). The first row is the unmodified baseline.
pub fn ablate_bands(checkpoint: &Path, dataset: &Path, subsets: &[Vec<String>], opts: &EvalOptions) -> Result<AblationTable> {
    let ds = Dataset::open(dataset)?;
    ds.stats()?;
    let model = load_classifier(checkpoint, &ds)?;
    let bands = model.config().bands.clone();
    let positions = subsets
        .iter()
        .map(|s| {
            s.iter()
                .map(|b| {
                    bands
                        .iter()
                        .position(|x| x == b)
                        .ok_or_else(|| Error::invalid(format!("unknown band {b}; model bands are {}", bands.join(","))))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let base_loader = SplitLoader::new(&ds, &opts.split, model.config(), opts.workers)?;
    let base = evaluate_loaded(&model, &ds, &base_loader, opts)?;
    let mut rows = vec![AblationRow {
        masked: Vec::new(),
        top1: base.metrics.top1,
        top5: base.metrics.top5,
    }];
    for (subset, pos) in subsets.iter().zip(positions) {
        let mut loader = SplitLoader::new(&ds, &opts.split, model.config(), opts.workers)?;
        loader.blank_bands(&pos);
        let r = evaluate_loaded(&model, &ds, &loader, opts)?;
        rows.push(AblationRow {
            masked: subset.clone(),
            top1: r.metrics.top1,
            top5: r.metrics.top5,
        });
    }
    Ok(AblationTable {
        rows,
        majority_rate: base.majority_rate,
    })
}
