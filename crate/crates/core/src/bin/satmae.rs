use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use satmae::data::{generate_synthetic, BandPolicy, Dataset, SyntheticConfig};
use satmae::harness::{
    ablate_bands, evaluate, finetune, linear_probe, pretrain, visualize, EvalOptions, Preset, RunConfig,
    VisualizeOptions,
};
use satmae::masking::{CropMode, MaskStrategy};
use satmae::model::Variant;

#[derive(Parser)]
#[command(name = "satmae", version, about = "Masked autoencoder pre-training for temporal and multi-spectral imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-spectral dataset.
    GenData(GenDataArgs),
    /// Compute (and optionally store) per-band statistics.
    Stats(StatsArgs),
    /// Masked-reconstruction pre-training.
    Pretrain(RunArgs),
    /// End-to-end finetuning from scratch or a checkpoint.
    Finetune(RunArgs),
    /// Linear classification on frozen features.
    Probe(RunArgs),
    /// Top-1, top-5 and per-class accuracy of a classifier checkpoint.
    Evaluate(EvalArgs),
    /// Accuracy with band subsets replaced by their mean.
    AblateBands(AblateArgs),
    /// Write original / masked / reconstruction PNG grids.
    Visualize(VisualizeArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    temporal_depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    /// Store the statistics in the manifest.
    #[arg(long)]
    write: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON or TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    decoder_dim: Option<usize>,
    #[arg(long)]
    decoder_depth: Option<usize>,
    #[arg(long)]
    decoder_heads: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    frames_per_token: Option<usize>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    mask_strategy: Option<MaskStrategy>,
    /// Comma-separated band list (default: drop low-resolution bands).
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    accum_steps: Option<usize>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    min_lr: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    layer_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long, value_parser = parse_crop_mode)]
    crop_mode: Option<CropMode>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    /// Average scores over resampled temporal assemblies.
    #[arg(long)]
    tta: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Comma-separated bands masked together; repeat for more rows.
    #[arg(long = "subset", value_delimiter = ',', num_args = 1)]
    subsets: Vec<String>,
    /// Add a row with every band masked.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "val")]
    split: String,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    indices: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    scale: u32,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    match s {
        "micro" => Ok(Preset::Micro),
        "large" => Ok(Preset::Large),
        _ => Err(format!("unknown preset {s} (micro, large)")),
    }
}

fn parse_crop_mode(s: &str) -> Result<CropMode, String> {
    match s {
        "consistent" => Ok(CropMode::Consistent),
        "inconsistent" => Ok(CropMode::Inconsistent),
        _ => Err(format!("unknown crop mode {s} (consistent, inconsistent)")),
    }
}

impl RunArgs {
    fn resolve(self, base: RunConfig) -> Result<RunConfig> {
        let mut run = match &self.config {
            Some(p) => RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => base,
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { run.$($field).+ = v; })*
            };
        }
        set!(
            dataset => dataset, out => out_dir, variant => model.variant, preset => model.preset,
            frames => model.frames, frames_per_token => model.frames_per_token, mask_ratio => model.mask_ratio,
            epochs => epochs, batch_size => batch_size, accum_steps => accum_steps, base_lr => base_lr,
            min_lr => min_lr, warmup_epochs => warmup_epochs, weight_decay => weight_decay,
            layer_decay => layer_decay, seed => seed, workers => workers, crop_mode => augment.crop_mode,
            checkpoint_every => checkpoint_every,
        );
        macro_rules! set_opt {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { run.$($field).+ = Some(v); })*
            };
        }
        set_opt!(
            init => init, embed_dim => model.embed_dim, depth => model.depth, heads => model.heads,
            decoder_dim => model.decoder_dim, decoder_depth => model.decoder_depth,
            decoder_heads => model.decoder_heads, patch_size => model.patch_size,
            mask_strategy => model.mask_strategy, stop_after => stop_after,
        );
        if let Some(b) = self.bands {
            run.model.bands = BandPolicy::Explicit(b);
        }
        if self.no_augment {
            run.augment.enabled = false;
        }
        if self.resume {
            run.resume = true;
        }
        Ok(run)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => {
            let mut cfg = match &a.config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => SyntheticConfig::default(),
            };
            macro_rules! set {
                ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
            }
            set!(classes, bands, size, train, val, temporal_depth, seed);
            let ds = generate_synthetic(&cfg, &a.out)?;
            info!("wrote {} train / {} val samples to {}", ds.len("train"), ds.len("val"), a.out.display());
            print_json(&serde_json::json!({"dataset": a.out, "train": ds.len("train"), "val": ds.len("val")}))
        }
        Command::Stats(a) => {
            let mut ds = Dataset::open(&a.dataset)?;
            let stats = ds.compute_stats(&a.split)?;
            print_json(&stats)?;
            if a.write {
                ds.set_stats(stats)?;
                ds.save_manifest()?;
            }
            Ok(())
        }
        Command::Pretrain(a) => {
            let report = pretrain(&a.resolve(RunConfig::default())?)?;
            print_json(&serde_json::json!({"losses": report.losses(), "checkpoint": report.checkpoint}))
        }
        Command::Finetune(a) => {
            let r = finetune(&a.resolve(RunConfig::finetune_defaults())?)?;
            print_json(&serde_json::json!({
                "best_top1": r.best_top1, "best_top5": r.best_top5, "best_epoch": r.best_epoch,
                "checkpoint": r.best_checkpoint, "history": r.history,
            }))
        }
        Command::Probe(a) => {
            let r = linear_probe(&a.resolve(RunConfig::finetune_defaults())?)?;
            print_json(&serde_json::json!({
                "best_top1": r.best_top1, "best_top5": r.best_top5, "best_epoch": r.best_epoch, "history": r.history,
            }))
        }
        Command::Evaluate(a) => print_json(&evaluate(&a.checkpoint, &a.dataset, &eval_options(&a))?),
        Command::AblateBands(a) => {
            let mut subsets: Vec<Vec<String>> = a
                .subsets
                .iter()
                .map(|s| s.split('+').map(str::to_string).collect())
                .collect();
            if a.all {
                let ck = satmae::model::Checkpoint::load(&a.eval.checkpoint)?;
                subsets.push(ck.config().bands.clone());
            }
            let table = ablate_bands(&a.eval.checkpoint, &a.eval.dataset, &subsets, &eval_options(&a.eval))?;
            eprint!("{}", table.render());
            print_json(&table)
        }
        Command::Visualize(a) => {
            let opts = VisualizeOptions {
                split: a.split,
                indices: a.indices,
                seed: a.seed,
                scale: a.scale,
            };
            let files = visualize(&a.checkpoint, &a.dataset, &a.out, &opts)?;
            print_json(&files)
        }
    }
}

fn eval_options(a: &EvalArgs) -> EvalOptions {
    EvalOptions {
        split: a.split.clone(),
        tta: a.tta,
        seed: a.seed,
        batch_size: a.batch_size,
        workers: a.workers,
    }
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    match err.downcast_ref::<satmae::Error>() {
        Some(e) => {
            let code = match e {
                satmae::Error::InvalidArgument(_) => 2,
                satmae::Error::InvalidState(_) => 3,
                satmae::Error::UnsupportedVersion { .. } => 4,
                satmae::Error::CorruptData { .. } => 5,
                satmae::Error::ConfigConflict(_) => 6,
                satmae::Error::Io { .. } => 7,
                _ => 1,
            };
            (code, e.category())
        }
        None => (1, "error"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, category) = exit_code(&e);
            eprintln!("error [{category}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
