use alloc::vec;
use alloc::vec::Vec;

use super::{add_bias, check_cols, column_sums, gemm_acc, gemm_nt_acc, gemm_tn_acc, name};
use super::{Kernel, MacCounter, Tensor, WeightInit};
use crate::error::Result;

/// `y = x·W + b` with `W` stored `input × output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Tensor,
}

impl Linear {
    pub fn new(input: usize, output: usize, bias: bool, init: &WeightInit, prefix: &str) -> Self {
        Linear {
            weight: init.uniform(&name(prefix, "weight"), &[input, output], input),
            bias: bias.then(|| init.uniform(&name(prefix, "bias"), &[output], input)),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output(&self) -> usize {
        self.weight.shape()[1]
    }
}

impl Kernel for Linear {
    type Cache = LinearCache;

    fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, LinearCache)> {
        let rows = check_cols(x, self.input(), "linear")?;
        let (i, o) = (self.input(), self.output());
        let mut y = vec![0.0; rows * o];
        gemm_acc(x.data(), self.weight.data(), &mut y, rows, i, o, macs);
        if let Some(b) = &self.bias {
            add_bias(&mut y, b.data());
        }
        let y = Tensor::from_vec(&[rows, o], y)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    fn backward(&self, cache: &LinearCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let rows = check_cols(dy, self.output(), "linear backward")?;
        let (i, o) = (self.input(), self.output());
        let mut dw = vec![0.0; i * o];
        gemm_tn_acc(cache.input.data(), dy.data(), &mut dw, rows, i, o);
        let mut dx = vec![0.0; rows * i];
        gemm_nt_acc(dy.data(), self.weight.data(), &mut dx, rows, o, i, &mut MacCounter::new());
        let mut grads = vec![Tensor::from_vec(&[i, o], dw)?];
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
