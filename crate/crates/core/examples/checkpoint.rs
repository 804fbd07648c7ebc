//! Save a model as a named-tensor checkpoint and load it into a classifier.

use candle_core::{DType, Device};
use satmae::model::{Checkpoint, CheckpointKind, MaskedAutoencoder, ModelConfig, Parts, Variant};

fn main() -> anyhow::Result<()> {
    let cfg = ModelConfig::micro(Variant::Plain, [32, 32], vec!["R".into(), "G".into(), "B".into()])?;
    let model = MaskedAutoencoder::new(cfg.clone(), Parts::PRETRAIN, DType::F32, &Device::Cpu, 1)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    Checkpoint::from_model(&model, CheckpointKind::Pretrain, 5)?.save(&path)?;

    let ck = Checkpoint::load(&path)?;
    println!("format v{}, {:?}, epoch {}", ck.header.format_version, ck.kind(), ck.header.epoch);
    println!("{} tensors, {} bytes on disk", ck.tensors.len(), std::fs::metadata(&path)?.len());
    for (name, (dims, _)) in ck.tensors.iter().take(5) {
        println!("  {name} {dims:?}");
    }

    let mut classify = cfg;
    classify.num_classes = Some(4);
    let classifier = MaskedAutoencoder::new(classify, Parts::CLASSIFY, DType::F32, &Device::Cpu, 2)?;
    let loaded = ck.load_into(&classifier, |name| name.starts_with("encoder."))?;
    println!("copied {loaded} encoder tensors into a fresh classifier");
    Ok(())
}
