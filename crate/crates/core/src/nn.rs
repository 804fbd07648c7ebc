//! Parameter storage and the transformer building blocks shared by the
//! encoder, decoder and classification head.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Standard deviation of the truncated-normal initializer.
pub const INIT_STD: f64 = 0.02;
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Param {
    pub var: Var,
    /// Whether decoupled weight decay applies (matrices only).
    pub decay: bool,
}

/// Named trainable tensors. Iteration order is the sorted name order, which
/// keeps serialization and optimizer updates deterministic.
#[derive(Debug)]
pub struct ParamStore {
    dtype: DType,
    device: Device,
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self {
            dtype,
            device,
            params: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, tensor: Tensor, decay: bool) -> Result<Tensor> {
        if self.params.contains_key(name) {
            return Err(Error::InvalidState(format!("parameter {name} registered twice")));
        }
        let var = Var::from_tensor(&tensor.to_dtype(self.dtype)?)?;
        let t = var.as_tensor().clone();
        self.params.insert(name.to_string(), Param { var, decay });
        Ok(t)
    }

    pub fn trunc_normal(&mut self, name: &str, shape: &[usize], rng: &mut Rng, decay: bool) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let values: Vec<f64> = (0..n).map(|_| trunc_normal_sample(rng) * INIT_STD).collect();
        let t = Tensor::from_vec(values, shape, &self.device)?;
        self.insert(name, t, decay)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::zeros(shape, self.dtype, &self.device)?;
        self.insert(name, t, false)
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::ones(shape, self.dtype, &self.device)?;
        self.insert(name, t, false)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.values().map(|p| p.var.elem_count()).sum()
    }

    /// Overwrite a parameter's values, checking the shape.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        let p = self
            .params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if p.var.dims() != value.dims() {
            return Err(Error::invalid(format!(
                "shape mismatch for {name}: have {:?}, got {:?}",
                p.var.dims(),
                value.dims()
            )));
        }
        p.var.set(&value.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        Ok(())
    }

    /// Flattened `f32` copy of every parameter keyed by name.
    pub fn snapshot(&self) -> Result<BTreeMap<String, (Vec<usize>, Vec<f32>)>> {
        self.params
            .iter()
            .map(|(k, p)| {
                let v = p.var.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
                Ok((k.clone(), (p.var.dims().to_vec(), v)))
            })
            .collect()
    }
}

fn trunc_normal_sample(rng: &mut Rng) -> f64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= 2.0 {
            return x;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    /// Weight stored as `[out, in]`.
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Self> {
        let weight = store.trunc_normal(&format!("{name}.weight"), &[fan_out, fan_in], rng, true)?;
        let bias = store.zeros(&format!("{name}.bias"), &[fan_out])?;
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let last = *dims.last().ok_or_else(|| Error::invalid("linear input is a scalar"))?;
        if last != self.in_dim() {
            return Err(Error::invalid(format!(
                "linear expects input width {}, got {last}",
                self.in_dim()
            )));
        }
        let rows = x.elem_count() / last;
        let y = x
            .reshape((rows, last))?
            .matmul(&self.weight.t()?)?
            .broadcast_add(&self.bias)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.out_dim();
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            weight: store.ones(&format!("{name}.weight"), &[dim])?,
            bias: store.zeros(&format!("{name}.bias"), &[dim])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + LAYER_NORM_EPS)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

/// Numerically stable softmax over the last dimension.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Mean cross-entropy of `[B, K]` logits against integer labels.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (b, k) = logits.dims2()?;
    if labels.len() != b || labels.iter().any(|&l| l >= k) {
        return Err(Error::invalid(format!("{} labels for {b} rows over {k} classes", labels.len())));
    }
    let idx: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
    let idx = Tensor::from_vec(idx, (b, 1), logits.device())?;
    let picked = log_softmax_last(logits)?.gather(&idx, 1)?;
    Ok((picked.sum_all()? * (-1.0 / b as f64))?)
}

#[derive(Debug, Clone)]
pub struct Attention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::invalid(format!("width {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, rng)?,
            proj: Linear::new(store, &format!("{name}.proj"), dim, dim, rng)?,
            heads,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, n, d) = x.dims3()?;
        let hd = d / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((b, n, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.get(0)?.contiguous()?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let scale = 1.0 / (hd as f64).sqrt();
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?;
        let attn = softmax_last(&scores)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, n, d))?;
        self.proj.forward(&out)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, rng)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu_erf()?)
    }
}

pub const MLP_RATIO: usize = 4;

/// Pre-norm transformer block.
#[derive(Debug, Clone)]
pub struct Block {
    norm1: LayerNorm,
    attn: Attention,
    norm2: LayerNorm,
    mlp: Mlp,
}

impl Block {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim)?,
            attn: Attention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim)?,
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, dim * MLP_RATIO, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.norm1.forward(x)?)?)?;
        Ok((&x + self.mlp.forward(&self.norm2.forward(&x)?)?)?)
    }
}
