//! Pre-training, finetuning and linear probing loops.

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use log::info;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{predict, scores_to_metrics};
use super::loader::SplitLoader;
use super::metrics::MetricsLog;
use super::optim::{accumulate, collect_grads, scale_grads, AdamW, AdamWConfig, Grads};
use super::schedule::LrSchedule;
use crate::data::Dataset;
use crate::error::{ensure, Error, Result};
use crate::model::{Checkpoint, CheckpointKind, ClassifyMode, MaskedAutoencoder, ModelConfig, Parts, Sample};
use crate::nn::cross_entropy;
use crate::rng::{derive_seed, Stream};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub model: ModelConfig,
    pub history: Vec<PretrainEpoch>,
    pub checkpoint: PathBuf,
}

impl PretrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.loss).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub top1: f64,
    pub top5: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifyReport {
    pub model: ModelConfig,
    pub history: Vec<ClassifyEpoch>,
    pub best_top1: f64,
    pub best_top5: f64,
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
}

/// Where finetuning starts.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Scratch,
    Checkpoint(PathBuf),
}

impl Init {
    pub fn from_run(run: &RunConfig) -> Self {
        run.init.clone().map_or(Init::Scratch, Init::Checkpoint)
    }
}

/// Hook applied to each finetuning micro-batch after augmentation. The
/// default does nothing; batch-mixing augmentations plug in here.
pub trait BatchTransform {
    fn apply(&self, samples: &mut Vec<Sample>, labels: &mut Vec<usize>, seed: u64) -> Result<()>;
}

pub struct NoMixing;

impl BatchTransform for NoMixing {
    fn apply(&self, _samples: &mut Vec<Sample>, _labels: &mut Vec<usize>, _seed: u64) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResumeState {
    run: serde_json::Value,
    step: usize,
    optimizer_step: u64,
    pretrain: Vec<PretrainEpoch>,
    classify: Vec<ClassifyEpoch>,
    best_top1: f64,
    best_top5: f64,
    best_epoch: usize,
}

fn prepare_run_dir(run: &RunConfig) -> Result<()> {
    fs::create_dir_all(&run.out_dir).map_err(|e| Error::io(&run.out_dir, e))?;
    run.save(&run.out_dir.join(RUN_CONFIG_FILE))
}

fn steps_per_epoch(n: usize, run: &RunConfig) -> usize {
    n.div_ceil(run.effective_batch())
}

fn schedule(run: &RunConfig, per_epoch: usize) -> LrSchedule {
    let warmup = (run.warmup_epochs * per_epoch as f64).round() as usize;
    LrSchedule::new(run.peak_lr(), run.min_lr, warmup, run.epochs * per_epoch)
}

/// Load a resumable checkpoint, if resuming, after checking the stored run
/// identity against `run`.
fn resume_from(run: &RunConfig, model: &MaskedAutoencoder, opt: &mut AdamW) -> Result<Option<(usize, ResumeState)>> {
    if !run.resume {
        return Ok(None);
    }
    let path = run.out_dir.join(LAST_CHECKPOINT);
    if !path.exists() {
        return Err(Error::InvalidState(format!("nothing to resume: {} does not exist", path.display())));
    }
    let ck = Checkpoint::load(&path)?;
    let state: ResumeState = serde_json::from_value(ck.header.state.clone())
        .map_err(|e| Error::InvalidState(format!("checkpoint has no resume state: {e}")))?;
    run.check_resumable(&state.run)?;
    if !ck.config().architecture_matches(model.config()) {
        return Err(Error::ConfigConflict("checkpoint architecture differs from the run".into()));
    }
    ck.load_into(model, |_| true)?;
    opt.import(&ck.tensors, state.optimizer_step)?;
    info!("resuming {} at epoch {}", run.out_dir.display(), ck.header.epoch);
    Ok(Some((ck.header.epoch, state)))
}

fn save_resumable(
    model: &MaskedAutoencoder,
    opt: &AdamW,
    kind: CheckpointKind,
    epoch: usize,
    state: &ResumeState,
    path: &Path,
) -> Result<()> {
    let mut ck = Checkpoint::from_model(model, kind, epoch)?;
    ck.tensors.extend(opt.export()?);
    ck.header.state = serde_json::to_value(state)?;
    ck.save(path)
}

/// Run one epoch of micro-batches; `loss_of` returns the mean loss of a
/// micro-batch. Returns the sample-weighted mean loss and the last lr.
#[allow(clippy::too_many_arguments)]
fn train_epoch(
    model: &MaskedAutoencoder,
    opt: &mut AdamW,
    sched: &LrSchedule,
    run: &RunConfig,
    order: &[usize],
    epoch: usize,
    step: &mut usize,
    mut loss_of: impl FnMut(&[usize], u64) -> Result<Tensor>,
) -> Result<(f64, f64)> {
    let mut total = 0.0;
    let mut lr = 0.0;
    for (s, chunk) in order.chunks(run.effective_batch()).enumerate() {
        let mut grads = Grads::new();
        for (m, micro) in chunk.chunks(run.batch_size).enumerate() {
            let seed = derive_seed(run.seed, Stream::Mask, &[epoch as u64, s as u64, m as u64]);
            let loss = loss_of(micro, seed)?;
            let value: f64 = loss.to_dtype(DType::F64)?.to_scalar()?;
            ensure!(value.is_finite(), "non-finite loss at epoch {epoch}, step {s}");
            total += value * micro.len() as f64;
            let weight = micro.len() as f64 / chunk.len() as f64;
            accumulate(&mut grads, scale_grads(collect_grads(model.store(), &loss.backward()?), weight)?)?;
        }
        lr = sched.lr(*step);
        opt.step(model.store(), &grads, lr)?;
        *step += 1;
    }
    Ok((total / order.len() as f64, lr))
}

fn open_dataset(run: &RunConfig) -> Result<Dataset> {
    run.validate()?;
    Dataset::open(&run.dataset)
}

/// Masked-reconstruction pre-training.
pub fn pretrain(run: &RunConfig) -> Result<PretrainReport> {
    let ds = open_dataset(run)?;
    let cfg = run.model.resolve(&ds, None)?;
    prepare_run_dir(run)?;
    let model = MaskedAutoencoder::new(cfg.clone(), Parts::PRETRAIN, DType::F32, &Device::Cpu, run.seed)?;
    let loader = SplitLoader::new(&ds, &run.train_split, &cfg, run.workers)?;
    let per_epoch = steps_per_epoch(loader.len(), run);
    let sched = schedule(run, per_epoch);
    let mut opt = AdamW::new(model.store(), AdamWConfig::pretrain(run.weight_decay), |_| Some(1.0))?;
    let mut state = ResumeState {
        run: run.identity()?,
        step: 0,
        optimizer_step: 0,
        pretrain: Vec::new(),
        classify: Vec::new(),
        best_top1: 0.0,
        best_top5: 0.0,
        best_epoch: 0,
    };
    let mut start = 0;
    if let Some((epoch, s)) = resume_from(run, &model, &mut opt)? {
        start = epoch;
        state = s;
    }
    let mut log = MetricsLog::open(&run.out_dir.join(METRICS_FILE), start == 0)?;
    info!(
        "pretraining {:?}: {} samples, {} steps/epoch, effective batch {} ({} accumulation steps)",
        cfg.variant,
        loader.len(),
        per_epoch,
        run.effective_batch(),
        run.accum_steps
    );
    let last = run.out_dir.join(LAST_CHECKPOINT);
    let end = run.stop_after.map_or(run.epochs, |s| s.min(run.epochs));
    for epoch in start..end {
        let order = loader.epoch_order(run.seed, epoch);
        let (loss, lr) = train_epoch(&model, &mut opt, &sched, run, &order, epoch, &mut state.step, |idx, seed| {
            let samples = loader.batch(idx, run.seed, epoch, Some(&run.augment))?;
            let input = model.prepare(&samples)?;
            Ok(model.forward_pretrain(&input, seed)?.loss)
        })?;
        let record = PretrainEpoch {
            epoch: epoch + 1,
            loss,
            lr,
            steps: per_epoch,
        };
        info!("epoch {} loss {:.5}", epoch + 1, loss);
        log.write(&serde_json::json!({
            "phase": "pretrain",
            "epoch": record.epoch,
            "loss": loss,
            "lr": lr,
            "steps": per_epoch,
            "accum_steps": run.accum_steps,
            "effective_batch": run.effective_batch(),
            "seed": run.seed,
        }))?;
        state.pretrain.push(record);
        state.optimizer_step = opt.step_count();
        save_resumable(&model, &opt, CheckpointKind::Pretrain, epoch + 1, &state, &last)?;
        if run.checkpoint_every > 0 && (epoch + 1) % run.checkpoint_every == 0 {
            let numbered = run.out_dir.join(format!("epoch-{:04}.ckpt", epoch + 1));
            fs::copy(&last, &numbered).map_err(|e| Error::io(&numbered, e))?;
        }
    }
    Ok(PretrainReport {
        model: cfg,
        history: state.pretrain,
        checkpoint: last,
    })
}

/// Build a classifier for `run`'s dataset and initialize it.
fn classifier(run: &RunConfig, ds: &Dataset, init: &Init) -> Result<MaskedAutoencoder> {
    let k = ds.manifest().num_classes();
    ensure!(k >= 1, "dataset declares no classes");
    let cfg = match init {
        Init::Scratch => run.model.resolve(ds, Some(k))?,
        Init::Checkpoint(path) => {
            let ck = Checkpoint::load(path)?;
            let mut cfg = ck.config().clone();
            if ck.kind() == CheckpointKind::Classifier {
                if let Some(ck_k) = cfg.num_classes {
                    ensure!(
                        ck_k == k,
                        "checkpoint head has {ck_k} classes but the dataset has {k}"
                    );
                }
            }
            let resolved = run.model.resolve(ds, Some(k))?;
            ensure!(
                cfg.architecture_matches(&resolved),
                "checkpoint architecture ({:?}, width {}) does not match the run ({:?}, width {})",
                cfg.variant,
                cfg.embed_dim,
                resolved.variant,
                resolved.embed_dim
            );
            cfg.num_classes = Some(k);
            cfg.image_size = resolved.image_size;
            cfg.min_year = resolved.min_year;
            cfg
        }
    };
    let model = MaskedAutoencoder::new(cfg, Parts::CLASSIFY, DType::F32, &Device::Cpu, run.seed)?;
    if let Init::Checkpoint(path) = init {
        let ck = Checkpoint::load(path)?;
        let n = ck.load_into(&model, |name| name.starts_with("encoder."))?;
        info!("loaded {n} encoder tensors from {}", path.display());
    }
    Ok(model)
}

/// End-to-end finetuning with layer-wise learning-rate decay. The best
/// validation top-1 checkpoint is kept as `best.ckpt`.
pub fn finetune(run: &RunConfig) -> Result<ClassifyReport> {
    finetune_with(run, &NoMixing)
}

pub fn finetune_with(run: &RunConfig, transform: &dyn BatchTransform) -> Result<ClassifyReport> {
    let ds = open_dataset(run)?;
    let model = classifier(run, &ds, &Init::from_run(run))?;
    let cfg = model.config().clone();
    prepare_run_dir(run)?;
    let train = SplitLoader::new(&ds, &run.train_split, &cfg, run.workers)?;
    let val = SplitLoader::new(&ds, &run.val_split, &cfg, run.workers)?;
    let val_labels = val.labels(&(0..val.len()).collect::<Vec<_>>())?;
    let per_epoch = steps_per_epoch(train.len(), run);
    let sched = schedule(run, per_epoch);
    let depth = cfg.depth;
    let decay = run.layer_decay;
    let lr_scale = |name: &str| model.layer_id(name).map(|id| decay.powi((depth + 1 - id.min(depth + 1)) as i32));
    let mut opt = AdamW::new(model.store(), AdamWConfig::finetune(run.weight_decay), lr_scale)?;
    let mut state = ResumeState {
        run: run.identity()?,
        step: 0,
        optimizer_step: 0,
        pretrain: Vec::new(),
        classify: Vec::new(),
        best_top1: f64::NEG_INFINITY,
        best_top5: 0.0,
        best_epoch: 0,
    };
    let mut start = 0;
    if let Some((epoch, s)) = resume_from(run, &model, &mut opt)? {
        start = epoch;
        state = s;
    }
    let mut log = MetricsLog::open(&run.out_dir.join(METRICS_FILE), start == 0)?;
    let last = run.out_dir.join(LAST_CHECKPOINT);
    let best = run.out_dir.join(BEST_CHECKPOINT);
    let end = run.stop_after.map_or(run.epochs, |s| s.min(run.epochs));
    for epoch in start..end {
        let order = train.epoch_order(run.seed, epoch);
        let (loss, lr) = train_epoch(&model, &mut opt, &sched, run, &order, epoch, &mut state.step, |idx, seed| {
            let mut samples = train.batch(idx, run.seed, epoch, Some(&run.augment))?;
            let mut labels = train.labels(idx)?;
            transform.apply(&mut samples, &mut labels, seed)?;
            let input = model.prepare(&samples)?;
            cross_entropy(&model.forward_classify(&input, ClassifyMode::Finetune)?, &labels)
        })?;
        let scores = predict(&model, &val, run.batch_size, false, run.seed)?;
        let m = scores_to_metrics(&scores, &val_labels, &ds.manifest().class_names)?;
        let record = ClassifyEpoch {
            epoch: epoch + 1,
            train_loss: loss,
            top1: m.top1,
            top5: m.top5,
            lr,
        };
        info!("epoch {} loss {:.4} top1 {:.4} top5 {:.4}", epoch + 1, loss, m.top1, m.top5);
        log.write(&serde_json::json!({
            "phase": "finetune",
            "epoch": record.epoch,
            "train_loss": loss,
            "top1": m.top1,
            "top5": m.top5,
            "lr": lr,
            "seed": run.seed,
        }))?;
        state.classify.push(record);
        state.optimizer_step = opt.step_count();
        if m.top1 > state.best_top1 {
            state.best_top1 = m.top1;
            state.best_top5 = m.top5;
            state.best_epoch = epoch + 1;
            Checkpoint::from_model(&model, CheckpointKind::Classifier, epoch + 1)?.save(&best)?;
        }
        save_resumable(&model, &opt, CheckpointKind::Classifier, epoch + 1, &state, &last)?;
    }
    Ok(ClassifyReport {
        model: cfg,
        history: state.classify,
        best_top1: state.best_top1,
        best_top5: state.best_top5,
        best_epoch: state.best_epoch,
        best_checkpoint: best,
    })
}

/// Pooled encoder features for every sample of a split, `[N, D]`.
fn extract_features(model: &MaskedAutoencoder, loader: &SplitLoader, batch: usize, seed: u64) -> Result<Tensor> {
    let idx: Vec<usize> = (0..loader.len()).collect();
    let parts = idx
        .chunks(batch)
        .map(|chunk| {
            let samples = loader.batch(chunk, seed, 0, None)?;
            Ok(model.features(&model.prepare(&samples)?)?.detach())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&parts, 0)?)
}

/// Train only a linear head on frozen encoder features. Fails if any
/// encoder weight changed during the run.
pub fn linear_probe(run: &RunConfig) -> Result<ClassifyReport> {
    let path = run
        .init
        .clone()
        .ok_or_else(|| Error::InvalidState("linear probing requires a checkpoint (init)".into()))?;
    if !path.exists() {
        return Err(Error::InvalidState(format!("checkpoint {} does not exist", path.display())));
    }
    let ds = open_dataset(run)?;
    let model = classifier(run, &ds, &Init::Checkpoint(path))?;
    let cfg = model.config().clone();
    prepare_run_dir(run)?;
    let frozen_before: Vec<_> = model
        .store()
        .snapshot()?
        .into_iter()
        .filter(|(k, _)| k.starts_with("encoder."))
        .collect();
    let train = SplitLoader::new(&ds, &run.train_split, &cfg, run.workers)?;
    let val = SplitLoader::new(&ds, &run.val_split, &cfg, run.workers)?;
    let train_x = extract_features(&model, &train, run.batch_size, run.seed)?;
    let val_x = extract_features(&model, &val, run.batch_size, run.seed)?;
    let train_y = train.labels(&(0..train.len()).collect::<Vec<_>>())?;
    let val_y = val.labels(&(0..val.len()).collect::<Vec<_>>())?;
    let per_epoch = steps_per_epoch(train.len(), run);
    let sched = schedule(run, per_epoch);
    let mut opt = AdamW::new(
        model.store(),
        AdamWConfig::finetune(run.weight_decay),
        |name| name.starts_with("head.").then_some(1.0),
    )?;
    let mut log = MetricsLog::open(&run.out_dir.join(METRICS_FILE), true)?;
    let best = run.out_dir.join(BEST_CHECKPOINT);
    let mut history = Vec::new();
    let (mut best_top1, mut best_top5, mut best_epoch) = (f64::NEG_INFINITY, 0.0, 0);
    let mut step = 0;
    for epoch in 0..run.epochs {
        let order = train.epoch_order(run.seed, epoch);
        let (loss, lr) = train_epoch(&model, &mut opt, &sched, run, &order, epoch, &mut step, |idx, _| {
            let ids = Tensor::from_vec(idx.iter().map(|&i| i as u32).collect::<Vec<_>>(), idx.len(), train_x.device())?;
            let logits = model.classify_features(&train_x.index_select(&ids, 0)?)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            cross_entropy(&logits, &labels)
        })?;
        let probs = crate::nn::softmax_last(&model.classify_features(&val_x)?)?;
        let scores: Vec<Vec<f64>> = probs.to_dtype(DType::F64)?.to_vec2()?;
        let m = scores_to_metrics(&scores, &val_y, &ds.manifest().class_names)?;
        log.write(&serde_json::json!({
            "phase": "probe",
            "epoch": epoch + 1,
            "train_loss": loss,
            "top1": m.top1,
            "top5": m.top5,
            "lr": lr,
            "seed": run.seed,
        }))?;
        history.push(ClassifyEpoch {
            epoch: epoch + 1,
            train_loss: loss,
            top1: m.top1,
            top5: m.top5,
            lr,
        });
        if m.top1 > best_top1 {
            best_top1 = m.top1;
            best_top5 = m.top5;
            best_epoch = epoch + 1;
            Checkpoint::from_model(&model, CheckpointKind::Classifier, epoch + 1)?.save(&best)?;
        }
    }
    let frozen_after: Vec<_> = model
        .store()
        .snapshot()?
        .into_iter()
        .filter(|(k, _)| k.starts_with("encoder."))
        .collect();
    if frozen_before != frozen_after {
        return Err(Error::InvalidState("encoder weights changed during linear probing".into()));
    }
    Ok(ClassifyReport {
        model: cfg,
        history,
        best_top1,
        best_top5,
        best_epoch,
        best_checkpoint: best,
    })
}
