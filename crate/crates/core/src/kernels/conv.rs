//! Stride-1 "same" convolutions over `[length × channels]` sequences.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{add_bias, check_cols, column_sums, gemm_acc, gemm_nt_acc, gemm_tn_acc, name, pad_rows};
use super::{Kernel, MacCounter, Tensor, WeightInit};
use crate::error::{Error, Result};

fn check_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::Config(format!("convolution kernel must be odd, got {kernel}")));
    }
    Ok(())
}

/// Dense 1-D convolution. Weight layout `[kernel, input, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    padded: Vec<f64>,
    rows: usize,
}

impl Conv1d {
    pub fn new(
        kernel: usize,
        input: usize,
        output: usize,
        bias: bool,
        init: &WeightInit,
        prefix: &str,
    ) -> Result<Self> {
        check_kernel(kernel)?;
        let fan_in = kernel * input;
        Ok(Conv1d {
            weight: init.uniform(&name(prefix, "weight"), &[kernel, input, output], fan_in),
            bias: bias.then(|| init.uniform(&name(prefix, "bias"), &[output], fan_in)),
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output(&self) -> usize {
        self.weight.shape()[2]
    }
}

impl Kernel for Conv1d {
    type Cache = Conv1dCache;

    fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, Conv1dCache)> {
        let (k, i, o) = (self.kernel(), self.input(), self.output());
        let rows = check_cols(x, i, "conv1d")?;
        let padded = pad_rows(x.data(), i, (k - 1) / 2);
        let mut y = vec![0.0; rows * o];
        let w = self.weight.data();
        for tap in 0..k {
            let window = &padded[tap * i..(tap + rows) * i];
            gemm_acc(window, &w[tap * i * o..(tap + 1) * i * o], &mut y, rows, i, o, macs);
        }
        if let Some(b) = &self.bias {
            add_bias(&mut y, b.data());
        }
        Ok((Tensor::from_vec(&[rows, o], y)?, Conv1dCache { padded, rows }))
    }

    fn backward(&self, cache: &Conv1dCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (k, i, o) = (self.kernel(), self.input(), self.output());
        let rows = check_cols(dy, o, "conv1d backward")?;
        if rows != cache.rows {
            return Err(Error::Shape(format!("conv1d backward: {rows} rows, cached {}", cache.rows)));
        }
        let w = self.weight.data();
        let mut dw = vec![0.0; k * i * o];
        let mut dpadded = vec![0.0; cache.padded.len()];
        let mut scratch = MacCounter::new();
        for tap in 0..k {
            let window = &cache.padded[tap * i..(tap + rows) * i];
            gemm_tn_acc(window, dy.data(), &mut dw[tap * i * o..(tap + 1) * i * o], rows, i, o);
            let dwindow = &mut dpadded[tap * i..(tap + rows) * i];
            gemm_nt_acc(dy.data(), &w[tap * i * o..(tap + 1) * i * o], dwindow, rows, o, i, &mut scratch);
        }
        let pad = (k - 1) / 2;
        let dx = dpadded[pad * i..(pad + rows) * i].to_vec();
        let mut grads = vec![Tensor::from_vec(&[k, i, o], dw)?];
        if self.bias.is_some() {
            grads.push(Tensor::from_vec(&[o], column_sums(dy.data(), o))?);
        }
        Ok((Tensor::from_vec(&[rows, i], dx)?, grads))
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut p = vec![("weight", &self.weight)];
        if let Some(b) = &self.bias {
            p.push(("bias", b));
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.weight];
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }
}

/// Depthwise separable convolution: a per-channel `kernel`-tap filter
/// (`[kernel, input]`) followed by a pointwise projection (`[input, output]`).
/// The optional bias belongs to the pointwise stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SepConv {
    pub depthwise: Tensor,
    pub pointwise: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct SepConvCache {
    padded: Vec<f64>,
    depthwise_out: Vec<f64>,
    rows: usize,
}

impl SepConv {
    pub fn new(
        kernel: usize,
        input: usize,
        output: usize,
        bias: bool,
        init: &WeightInit,
        prefix: &str,
    ) -> Result<Self> {
        check_kernel(kernel)?;
        Ok(SepConv {
            depthwise: init.uniform(&name(prefix, "depthwise"), &[kernel, input], kernel),
            pointwise: init.uniform(&name(prefix, "pointwise"), &[input, output], input),
            bias: bias.then(|| init.uniform(&name(prefix, "bias"), &[output], input)),
        })
    }

    pub fn kernel(&self) -> usize {
        self.depthwise.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.depthwise.shape()[1]
    }

    pub fn output(&self) -> usize {
        self.pointwise.shape()[1]
    }
}

impl Kernel for SepConv {
    type Cache = SepConvCache;

    fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, SepConvCache)> {
        let (k, i, o) = (self.kernel(), self.input(), self.output());
        let rows = check_cols(x, i, "sepconv")?;
        let padded = pad_rows(x.data(), i, (k - 1) / 2);
        let dw = self.depthwise.data();
        let mut z = vec![0.0; rows * i];
        for t in 0..rows {
            let zrow = &mut z[t * i..(t + 1) * i];
            for tap in 0..k {
                let xrow = &padded[(t + tap) * i..(t + tap + 1) * i];
                let wrow = &dw[tap * i..(tap + 1) * i];
                for c in 0..i {
                    zrow[c] += xrow[c] * wrow[c];
                }
                macs.add(i);
            }
        }
        let mut y = vec![0.0; rows * o];
        gemm_acc(&z, self.pointwise.data(), &mut y, rows, i, o, macs);
        if let Some(b) = &self.bias {
            add_bias(&mut y, b.data());
        }
        Ok((
            Tensor::from_vec(&[rows, o], y)?,
            SepConvCache {
                padded,
                depthwise_out: z,
                rows,
            },
        ))
    }

    fn backward(&self, cache: &SepConvCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (k, i, o) = (self.kernel(), self.input(), self.output());
        let rows = check_cols(dy, o, "sepconv backward")?;
        if rows != cache.rows {
            return Err(Error::Shape(format!("sepconv backward: {rows} rows, cached {}", cache.rows)));
        }
        let mut dpw = vec![0.0; i * o];
        gemm_tn_acc(&cache.depthwise_out, dy.data(), &mut dpw, rows, i, o);
        let mut dz = vec![0.0; rows * i];
        gemm_nt_acc(dy.data(), self.pointwise.data(), &mut dz, rows, o, i, &mut MacCounter::new());

        let dw = self.depthwise.data();
        let mut ddw = vec![0.0; k * i];
        let mut dpadded = vec![0.0; cache.padded.len()];
        for t in 0..rows {
            let dzrow = &dz[t * i..(t + 1) * i];
            for tap in 0..k {
                let base = (t + tap) * i;
                for c in 0..i {
                    ddw[tap * i + c] += cache.padded[base + c] * dzrow[c];
                    dpadded[base + c] += dzrow[c] * dw[tap * i + c];
                }
            }
        }
        let pad = (k - 1) / 2;
        let dx = dpadded[pad * i..(pad + rows) * i].to_vec();
        let mut grads = vec![Tensor::from_vec(&[k, i], ddw)?, Tensor::from_vec(&[i, o], dpw)?];
        if self.bias.is_some() {
            grads.push(Tensor::from_vec(&[o], column_sums(dy.data(), o))?);
        }
        Ok((Tensor::from_vec(&[rows, i], dx)?, grads))
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut p = vec![("depthwise", &self.depthwise), ("pointwise", &self.pointwise)];
        if let Some(b) = &self.bias {
            p.push(("bias", b));
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.depthwise, &mut self.pointwise];
        if let Some(b) = &mut self.bias {
            p.push(b);
        }
        p
    }
}
