//! Training and evaluation orchestration.
//!
//! Every run writes its exact [`RunConfig`] to `run_config.json` and one JSON
//! record per epoch to `metrics.jsonl` inside its output directory.

pub mod config;
pub mod eval;
pub mod loader;
pub mod metrics;
pub mod optim;
pub mod schedule;
pub mod train;
pub mod visualize;

pub use config::{AugmentSettings, ModelSettings, Preset, RunConfig};
pub use eval::{ablate_bands, evaluate, load_classifier, predict, AblationRow, AblationTable, EvalOptions, EvalReport, TTA_SAMPLES};
pub use loader::SplitLoader;
pub use metrics::{majority_rate, read_metrics, score, ClassAccuracy, ClassificationMetrics, MetricsLog};
pub use optim::{AdamW, AdamWConfig};
pub use schedule::LrSchedule;
pub use train::{
    finetune, finetune_with, linear_probe, pretrain, BatchTransform, ClassifyEpoch, ClassifyReport, Init, NoMixing,
    PretrainEpoch, PretrainReport, BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE, RUN_CONFIG_FILE,
};
pub use visualize::{choose_rendering, visualize, Rendering, VisualizeOptions};
