//! Dense f64 kernels with hand-written backward passes.
//!
//! Every forward kernel takes a [`MacCounter`] and adds the number of
//! multiply-accumulates its inner loops actually execute. Convolutions
//! materialize their zero padding, so padded taps are counted too.

mod attention;
mod conv;
mod embedding;
mod ffn;
mod gradcheck;
mod layernorm;
mod linear;
mod regulate;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

pub use attention::{Mhsa, MhsaCache};
pub use conv::{Conv1d, Conv1dCache, SepConv, SepConvCache};
pub use embedding::Embedding;
pub use ffn::{Ffn, FfnCache};
pub use gradcheck::{grad_check, relative_error};
pub use layernorm::{LayerNorm, LayerNormCache, LAYERNORM_EPS};
pub use linear::{Linear, LinearCache};
pub use regulate::{length_regulate, length_regulate_backward};

use crate::error::{Error, Result};
use crate::rng;
use crate::searchspace::OpCode;

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} += {:?}", self.shape, other.shape)));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Running count of multiply-accumulate operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MacCounter(u64);

impl MacCounter {
    pub fn new() -> Self {
        MacCounter(0)
    }

    #[inline]
    pub fn add(&mut self, n: usize) {
        self.0 += n as u64;
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_acc(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    macs: &mut MacCounter,
) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
        macs.add(k * n);
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ`
pub(crate) fn gemm_nt_acc(
    a: &[f64],
    b: &[f64],
    out: &mut [f64],
    m: usize,
    n: usize,
    k: usize,
    macs: &mut MacCounter,
) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
        macs.add(k * n);
    }
}

pub(crate) fn add_bias(y: &mut [f64], bias: &[f64]) {
    for row in y.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

pub(crate) fn column_sums(dy: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for row in dy.chunks_exact(cols) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
    out
}

/// Zero-pad a `rows × cols` matrix with `pad` rows above and below.
pub(crate) fn pad_rows(x: &[f64], cols: usize, pad: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + 2 * pad * cols];
    out[pad * cols..pad * cols + x.len()].copy_from_slice(x);
    out
}

/// Seeded weight factory. Each named tensor is drawn from its own stream, so
/// the values of one tensor do not depend on which others were created.
#[derive(Debug, Clone, Copy)]
pub struct WeightInit {
    seed: u64,
    gain: f64,
}

impl WeightInit {
    pub fn new(seed: u64) -> Self {
        WeightInit { seed, gain: 1.0 }
    }

    /// Multiplies every bound by `gain`.
    pub fn with_gain(self, gain: f64) -> Self {
        WeightInit { gain, ..self }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[-sqrt(1/fan_in), +sqrt(1/fan_in)]`.
    pub fn uniform(&self, name: &str, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = self.gain * libm::sqrt(1.0 / fan_in.max(1) as f64);
        let mut rng = rng::stream(self.seed, name);
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }
}

/// Kernel families, including auxiliary ones outside the searched vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Linear,
    LayerNorm,
    Embedding,
    Conv1d,
    SepConv,
    Mhsa,
    Ffn,
    LengthReg,
}

impl OpKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        use OpKind::*;
        [Linear, LayerNorm, Embedding, Conv1d, SepConv, Mhsa, Ffn, LengthReg]
            .get(code as usize)
            .copied()
    }
}

/// Sizes that determine an instance's weight shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpDims {
    pub input: usize,
    pub output: usize,
    /// Filter width for FFN, head count for MHSA, otherwise 0.
    pub hidden: usize,
    pub kernel: usize,
    pub bias: bool,
}

/// A kernel with its own weights: forward with cache, manual backward.
pub trait Kernel {
    type Cache;

    fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, Self::Cache)>;

    /// Returns the input gradient and one gradient per entry of `params()`.
    fn backward(&self, cache: &Self::Cache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)>;

    fn params(&self) -> Vec<(&'static str, &Tensor)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }
}

/// A weighted kernel instance that can sit in a model slot.
#[derive(Debug, Clone, PartialEq)]
pub enum OpInstance {
    Linear(Linear),
    LayerNorm(LayerNorm),
    Conv1d(Conv1d),
    SepConv(SepConv),
    Mhsa(Mhsa),
    Ffn(Ffn),
}

#[derive(Debug, Clone)]
pub enum OpCache {
    Linear(LinearCache),
    LayerNorm(LayerNormCache),
    Conv1d(Conv1dCache),
    SepConv(SepConvCache),
    Mhsa(MhsaCache),
    Ffn(FfnCache),
}

/// Width settings needed to instantiate a searched operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotDims {
    pub hidden: usize,
    pub ffn_filter: usize,
    pub ffn_kernel: usize,
    pub bias: bool,
}

impl OpInstance {
    /// Instantiate a searched operation of width `dims.hidden`.
    pub fn for_code(code: OpCode, dims: SlotDims, init: &WeightInit, name: &str) -> Result<Self> {
        code.check_hidden(dims.hidden)?;
        let d = dims.hidden;
        Ok(match code {
            OpCode::Mhsa { heads } => OpInstance::Mhsa(Mhsa::new(d, heads as usize, dims.bias, init, name)?),
            OpCode::SepConv { kernel } => {
                OpInstance::SepConv(SepConv::new(kernel as usize, d, d, dims.bias, init, name)?)
            }
            OpCode::Ffn => OpInstance::Ffn(Ffn::new(d, dims.ffn_filter, dims.ffn_kernel, dims.bias, init, name)?),
        })
    }

    pub fn kind(&self) -> OpKind {
        match self {
            OpInstance::Linear(_) => OpKind::Linear,
            OpInstance::LayerNorm(_) => OpKind::LayerNorm,
            OpInstance::Conv1d(_) => OpKind::Conv1d,
            OpInstance::SepConv(_) => OpKind::SepConv,
            OpInstance::Mhsa(_) => OpKind::Mhsa,
            OpInstance::Ffn(_) => OpKind::Ffn,
        }
    }

    pub fn dims(&self) -> OpDims {
        match self {
            OpInstance::Linear(l) => OpDims {
                input: l.input(),
                output: l.output(),
                bias: l.bias.is_some(),
                ..OpDims::default()
            },
            OpInstance::LayerNorm(n) => OpDims {
                input: n.width(),
                output: n.width(),
                bias: true,
                ..OpDims::default()
            },
            OpInstance::Conv1d(c) => OpDims {
                input: c.input(),
                output: c.output(),
                kernel: c.kernel(),
                bias: c.bias.is_some(),
                ..OpDims::default()
            },
            OpInstance::SepConv(c) => OpDims {
                input: c.input(),
                output: c.output(),
                kernel: c.kernel(),
                bias: c.bias.is_some(),
                ..OpDims::default()
            },
            OpInstance::Mhsa(m) => OpDims {
                input: m.width(),
                output: m.width(),
                hidden: m.heads(),
                bias: m.has_bias(),
                ..OpDims::default()
            },
            OpInstance::Ffn(f) => OpDims {
                input: f.conv.input(),
                output: f.linear.output(),
                hidden: f.conv.output(),
                kernel: f.conv.kernel(),
                bias: f.linear.bias.is_some(),
            },
        }
    }

    pub fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, OpCache)> {
        Ok(match self {
            OpInstance::Linear(k) => {
                let (y, c) = k.forward(x, macs)?;
                (y, OpCache::Linear(c))
            }
            OpInstance::LayerNorm(k) => {
                let (y, c) = k.forward(x, macs)?;
                (y, OpCache::LayerNorm(c))
            }
            OpInstance::Conv1d(k) => {
                let (y, c) = k.forward(x, macs)?;
                (y, OpCache::Conv1d(c))
            }
            OpInstance::SepConv(k) => {
                let (y, c) = k.forward(x, macs)?;
                (y, OpCache::SepConv(c))
            }
            OpInstance::Mhsa(k) => {
                let (y, c) = k.forward(x, macs)?;
                (y, OpCache::Mhsa(c))
            }
            OpInstance::Ffn(k) => {
                let (y, c) = k.forward(x, macs)?;
                (y, OpCache::Ffn(c))
            }
        })
    }

    /// Forward pass without keeping the cache.
    pub fn apply(&self, x: &Tensor, macs: &mut MacCounter) -> Result<Tensor> {
        self.forward(x, macs).map(|(y, _)| y)
    }

    pub fn backward(&self, cache: &OpCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match (self, cache) {
            (OpInstance::Linear(k), OpCache::Linear(c)) => k.backward(c, dy),
            (OpInstance::LayerNorm(k), OpCache::LayerNorm(c)) => k.backward(c, dy),
            (OpInstance::Conv1d(k), OpCache::Conv1d(c)) => k.backward(c, dy),
            (OpInstance::SepConv(k), OpCache::SepConv(c)) => k.backward(c, dy),
            (OpInstance::Mhsa(k), OpCache::Mhsa(c)) => k.backward(c, dy),
            (OpInstance::Ffn(k), OpCache::Ffn(c)) => k.backward(c, dy),
            _ => Err(Error::Shape(format!("cache does not belong to a {:?} kernel", self.kind()))),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            OpInstance::Linear(k) => k.params(),
            OpInstance::LayerNorm(k) => k.params(),
            OpInstance::Conv1d(k) => k.params(),
            OpInstance::SepConv(k) => k.params(),
            OpInstance::Mhsa(k) => k.params(),
            OpInstance::Ffn(k) => k.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            OpInstance::Linear(k) => k.params_mut(),
            OpInstance::LayerNorm(k) => k.params_mut(),
            OpInstance::Conv1d(k) => k.params_mut(),
            OpInstance::SepConv(k) => k.params_mut(),
            OpInstance::Mhsa(k) => k.params_mut(),
            OpInstance::Ffn(k) => k.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuild an instance from a header and its tensors in `params()` order.
    pub fn from_parts(kind: OpKind, dims: OpDims, tensors: Vec<Tensor>) -> Result<Self> {
        let zero = WeightInit::new(0).with_gain(0.0);
        let mut op = match kind {
            OpKind::Linear => OpInstance::Linear(Linear::new(dims.input, dims.output, dims.bias, &zero, "")),
            OpKind::LayerNorm => OpInstance::LayerNorm(LayerNorm::new(dims.input)),
            OpKind::Conv1d => OpInstance::Conv1d(Conv1d::new(
                dims.kernel,
                dims.input,
                dims.output,
                dims.bias,
                &zero,
                "",
            )?),
            OpKind::SepConv => OpInstance::SepConv(SepConv::new(
                dims.kernel,
                dims.input,
                dims.output,
                dims.bias,
                &zero,
                "",
            )?),
            OpKind::Mhsa => OpInstance::Mhsa(Mhsa::new(dims.input, dims.hidden, dims.bias, &zero, "")?),
            OpKind::Ffn => OpInstance::Ffn(Ffn::new(
                dims.input,
                dims.hidden,
                dims.kernel,
                dims.bias,
                &zero,
                "",
            )?),
            OpKind::Embedding | OpKind::LengthReg => {
                return Err(Error::Config(format!("{kind:?} is not a slot kernel")))
            }
        };
        let slots = op.params_mut();
        if slots.len() != tensors.len() {
            return Err(Error::Shape(format!(
                "{kind:?} expects {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "{kind:?} tensor shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(op)
    }

    /// Fingerprint of every weight value, in `params()` order.
    pub fn fingerprint(&self) -> u64 {
        rng::fingerprint(self.params().into_iter().flat_map(|(_, t)| t.data().iter()))
    }
}

pub(crate) fn check_cols(x: &Tensor, cols: usize, what: &str) -> Result<usize> {
    let (rows, c) = x.dims2()?;
    if c != cols {
        return Err(Error::Shape(format!("{what} expects {cols} input columns, got {c}")));
    }
    Ok(rows)
}

pub(crate) fn name(prefix: &str, leaf: &str) -> String {
    format!("{prefix}.{leaf}")
}
