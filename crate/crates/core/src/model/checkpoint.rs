//! Checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "SATMAECK"
//! hlen       u32      length of the JSON header in bytes
//! header     hlen bytes of UTF-8 JSON (CheckpointHeader)
//! count      u32      number of tensor records
//! record*    u32 name_len, name bytes, u32 ndim, ndim x u32 dims, prod(dims) x f32
//! ```
//!
//! Records are written in name order. Optimizer moments use the
//! `optim.m.<param>` and `optim.v.<param>` names.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::mae::MaskedAutoencoder;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SATMAECK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub type TensorMap = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    /// Encoder and decoder from masked reconstruction.
    Pretrain,
    /// Encoder and classification head.
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub config: ModelConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Training state needed to resume (schedule position, optimizer step,
    /// seeds, run fingerprint). Free-form so the harness owns its schema.
    #[serde(default)]
    pub state: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: TensorMap,
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, config: ModelConfig, epoch: usize) -> Self {
        Self {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                kind,
                config,
                epoch,
                state: serde_json::Value::Null,
            },
            tensors: TensorMap::new(),
        }
    }

    /// Capture every model parameter.
    pub fn from_model(model: &MaskedAutoencoder, kind: CheckpointKind, epoch: usize) -> Result<Self> {
        let mut ck = Self::new(kind, model.config().clone(), epoch);
        ck.tensors = model.store().snapshot()?;
        Ok(ck)
    }

    pub fn kind(&self) -> CheckpointKind {
        self.header.kind
    }

    pub fn config(&self) -> &ModelConfig {
        &self.header.config
    }

    /// Model weights only (optimizer records excluded).
    pub fn weights(&self) -> impl Iterator<Item = (&String, &(Vec<usize>, Vec<f32>))> {
        self.tensors.iter().filter(|(k, _)| !k.starts_with("optim."))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut buf = Vec::with_capacity(header.len() + 16 + self.tensors.values().map(|(_, v)| 4 * v.len() + 64).sum::<usize>());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, (dims, values)) in &self.tensors {
            let expected: usize = dims.iter().product();
            if expected != values.len() {
                return Err(Error::invalid(format!(
                    "tensor {name} has {} values for shape {dims:?}",
                    values.len()
                )));
            }
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8], what: &str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, what };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(r.corrupt("not a checkpoint (bad magic)"));
        }
        let hlen = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(hlen)?)?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: header.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let count = r.u32()? as usize;
        let mut tensors = TensorMap::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| r.corrupt("tensor name is not UTF-8"))?
                .to_string();
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(r.corrupt(&format!("implausible rank {ndim} for {name}")));
            }
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let values = r
                .take(4 * n)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if tensors.insert(name.clone(), (dims, values)).is_some() {
                return Err(r.corrupt(&format!("duplicate tensor {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt("trailing bytes after the last record"));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// Copy stored weights into `model` for every parameter whose name
    /// passes `filter`. Every selected model parameter must be present with
    /// the same shape. Returns the number of tensors copied.
    pub fn load_into(&self, model: &MaskedAutoencoder, filter: impl Fn(&str) -> bool) -> Result<usize> {
        let store = model.store();
        let mut copied = 0;
        for (name, param) in store.iter() {
            if !filter(name) {
                continue;
            }
            let (dims, values) = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::InvalidState(format!("checkpoint has no tensor {name}")))?;
            if dims.as_slice() != param.var.dims() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {name} has shape {dims:?}, model expects {:?}",
                    param.var.dims()
                )));
            }
            let t = candle_core::Tensor::from_slice(values, dims.as_slice(), store.device())?;
            store.set(name, &t)?;
            copied += 1;
        }
        Ok(copied)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a str,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: &str) -> Error {
        Error::CorruptData {
            what: self.what.to_string(),
            reason: reason.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt(&format!("truncated at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Parts, Variant};
    use candle_core::{DType, Device};

    fn model(seed: u64) -> MaskedAutoencoder {
        let bands = vec!["S0".to_string(), "S1".to_string()];
        let cfg = ModelConfig::micro(Variant::Plain, [8, 8], bands)
            .unwrap()
            .with_widths(16, 1, 2, 8, 1, 2)
            .unwrap();
        let mut cfg = cfg;
        cfg.patch_size = 4;
        MaskedAutoencoder::new(cfg, Parts::PRETRAIN, DType::F32, &Device::Cpu, seed).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let m = model(1);
        let mut ck = Checkpoint::from_model(&m, CheckpointKind::Pretrain, 3).unwrap();
        ck.header.state = serde_json::json!({"step": 12});
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes, "mem").unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn load_into_restores_weights() {
        let a = model(1);
        let b = model(2);
        let ck = Checkpoint::from_model(&a, CheckpointKind::Pretrain, 0).unwrap();
        assert_ne!(b.store().snapshot().unwrap(), ck.tensors);
        ck.load_into(&b, |_| true).unwrap();
        assert_eq!(b.store().snapshot().unwrap(), ck.tensors);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let ck = Checkpoint::from_model(&model(0), CheckpointKind::Pretrain, 0).unwrap();
        let bytes = ck.to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "x"), Err(Error::CorruptData { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad, "x"), Err(Error::CorruptData { .. })));
        let mut ck2 = ck.clone();
        ck2.header.format_version = 99;
        let b2 = ck2.to_bytes().unwrap();
        assert!(matches!(Checkpoint::from_bytes(&b2, "x"), Err(Error::UnsupportedVersion { found: 99, .. })));
    }
}
