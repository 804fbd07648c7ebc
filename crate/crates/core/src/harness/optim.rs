//! AdamW with per-parameter learning-rate scales.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor};

use crate::error::{Error, Result};
use crate::model::TensorMap;
use crate::nn::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn pretrain(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn finetune(weight_decay: f64) -> Self {
        Self {
            beta2: 0.999,
            ..Self::pretrain(weight_decay)
        }
    }
}

struct Slot {
    m: Tensor,
    v: Tensor,
    lr_scale: f64,
    decay: bool,
}

/// Decoupled weight decay; parameters flagged `decay = false` (biases,
/// norms, tokens) are never decayed.
pub struct AdamW {
    cfg: AdamWConfig,
    slots: BTreeMap<String, Slot>,
    step: u64,
}

impl AdamW {
    /// Optimize every parameter accepted by `lr_scale` (returning `None`
    /// freezes a parameter).
    pub fn new(store: &ParamStore, cfg: AdamWConfig, lr_scale: impl Fn(&str) -> Option<f64>) -> Result<Self> {
        let mut slots = BTreeMap::new();
        for (name, p) in store.iter() {
            let Some(scale) = lr_scale(name) else { continue };
            let z = p.var.as_tensor().zeros_like()?;
            slots.insert(
                name.clone(),
                Slot {
                    m: z.clone(),
                    v: z,
                    lr_scale: scale,
                    decay: p.decay,
                },
            );
        }
        Ok(Self { cfg, slots, step: 0 })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn trained(&self) -> impl Iterator<Item = &String> {
        self.slots.keys()
    }

    /// Apply one update with `grads` already averaged over the effective batch.
    pub fn step(&mut self, store: &ParamStore, grads: &Grads, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (name, slot) in self.slots.iter_mut() {
            let p = store.get(name).expect("slot names come from the store");
            let theta = p.var.as_tensor();
            let Some(g) = grads.get(name) else { continue };
            slot.m = ((&slot.m * self.cfg.beta1)? + (g * (1.0 - self.cfg.beta1))?)?;
            slot.v = ((&slot.v * self.cfg.beta2)? + (g.sqr()? * (1.0 - self.cfg.beta2))?)?;
            let lr = lr * slot.lr_scale;
            let m_hat = (&slot.m / bc1)?;
            let denom = ((&slot.v / bc2)?.sqrt()? + self.cfg.eps)?;
            let mut next = theta.clone();
            if slot.decay && self.cfg.weight_decay > 0.0 {
                next = (next * (1.0 - lr * self.cfg.weight_decay))?;
            }
            next = (next - ((m_hat / denom)? * lr)?)?;
            p.var.set(&next)?;
        }
        Ok(())
    }

    /// Moments as `optim.m.<name>` / `optim.v.<name>` records.
    pub fn export(&self) -> Result<TensorMap> {
        let mut out = TensorMap::new();
        for (name, slot) in &self.slots {
            for (prefix, t) in [("optim.m.", &slot.m), ("optim.v.", &slot.v)] {
                let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
                out.insert(format!("{prefix}{name}"), (t.dims().to_vec(), v));
            }
        }
        Ok(out)
    }

    /// Restore moments and the step counter.
    pub fn import(&mut self, records: &TensorMap, step: u64) -> Result<()> {
        for (name, slot) in self.slots.iter_mut() {
            for (prefix, target) in [("optim.m.", &mut slot.m), ("optim.v.", &mut slot.v)] {
                let key = format!("{prefix}{name}");
                let (dims, values) = records
                    .get(&key)
                    .ok_or_else(|| Error::InvalidState(format!("checkpoint lacks optimizer record {key}")))?;
                if dims.as_slice() != target.dims() {
                    return Err(Error::invalid(format!("optimizer record {key} has shape {dims:?}")));
                }
                *target = Tensor::from_slice(values, dims.as_slice(), target.device())?.to_dtype(target.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}

/// Gradients keyed by parameter name.
pub type Grads = BTreeMap<String, Tensor>;

/// Pull the gradients of every parameter in `store` out of a backward pass.
pub fn collect_grads(store: &ParamStore, grads: &GradStore) -> Grads {
    store
        .iter()
        .filter_map(|(name, p)| grads.get(p.var.as_tensor()).map(|g| (name.clone(), g.clone())))
        .collect()
}

/// `acc += next`, parameter by parameter.
pub fn accumulate(acc: &mut Grads, next: Grads) -> Result<()> {
    for (name, g) in next {
        let sum = match acc.remove(&name) {
            Some(prev) => (prev + g)?,
            None => g,
        };
        acc.insert(name, sum);
    }
    Ok(())
}

/// Multiply every gradient by `factor`.
pub fn scale_grads(grads: Grads, factor: f64) -> Result<Grads> {
    grads.into_iter().map(|(k, g)| Ok((k, (g * factor)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn matches_scalar_reference() {
        let mut store = ParamStore::new(DType::F64, Device::Cpu);
        store.zeros("w", &[2]).unwrap();
        store.set("w", &Tensor::new(&[1.0f64, -2.0], &Device::Cpu).unwrap()).unwrap();
        let cfg = AdamWConfig::pretrain(0.1);
        let mut opt = AdamW::new(&store, cfg, |_| Some(0.5)).unwrap();
        // Zero-initialized parameters are not decayed.
        let mut theta = [1.0f64, -2.0];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        for step in 1..=3 {
            let x = store.get("w").unwrap().var.as_tensor().clone();
            let loss = (x.sqr().unwrap().sum_all().unwrap() * 0.5).unwrap();
            let grads = collect_grads(&store, &loss.backward().unwrap());
            opt.step(&store, &grads, 0.1).unwrap();
            for i in 0..2 {
                let g = theta[i];
                m[i] = 0.9 * m[i] + 0.1 * g;
                v[i] = 0.95 * v[i] + 0.05 * g * g;
                let mh = m[i] / (1.0 - 0.9f64.powi(step));
                let vh = v[i] / (1.0 - 0.95f64.powi(step));
                theta[i] -= 0.05 * mh / (vh.sqrt() + 1e-8);
            }
        }
        let got = store.get("w").unwrap().var.as_tensor().to_vec1::<f64>().unwrap();
        for i in 0..2 {
            assert!((got[i] - theta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_parameters_untouched() {
        let mut store = ParamStore::new(DType::F32, Device::Cpu);
        let mut rng = crate::rng::stream_rng(0, crate::rng::Stream::Init, &[]);
        store.trunc_normal("a", &[3], &mut rng, true).unwrap();
        store.trunc_normal("b", &[3], &mut rng, true).unwrap();
        let before = store.snapshot().unwrap();
        let mut opt = AdamW::new(&store, AdamWConfig::finetune(0.05), |n| (n == "b").then_some(1.0)).unwrap();
        let a = store.get("a").unwrap().var.as_tensor().clone();
        let b = store.get("b").unwrap().var.as_tensor().clone();
        let grads = collect_grads(&store, &(a.sum_all().unwrap() + b.sum_all().unwrap()).unwrap().backward().unwrap());
        opt.step(&store, &grads, 0.1).unwrap();
        let after = store.snapshot().unwrap();
        assert_eq!(before["a"], after["a"]);
        assert_ne!(before["b"], after["b"]);
    }
}
