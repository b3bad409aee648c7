use alloc::vec::Vec;

use super::{name, Conv1d, Conv1dCache, Kernel, Linear, LinearCache, MacCounter, Tensor, WeightInit};
use crate::error::Result;

/// Feed-forward block: `Conv1d(width → filter, kernel) → ReLU → Linear(filter → width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub conv: Conv1d,
    pub linear: Linear,
}

#[derive(Debug, Clone)]
pub struct FfnCache {
    conv: Conv1dCache,
    pre_activation: Tensor,
    linear: LinearCache,
}

impl Ffn {
    pub fn new(
        width: usize,
        filter: usize,
        kernel: usize,
        bias: bool,
        init: &WeightInit,
        prefix: &str,
    ) -> Result<Self> {
        Ok(Ffn {
            conv: Conv1d::new(kernel, width, filter, bias, init, &name(prefix, "conv"))?,
            linear: Linear::new(filter, width, bias, init, &name(prefix, "linear")),
        })
    }
}

impl Kernel for Ffn {
    type Cache = FfnCache;

    fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, FfnCache)> {
        let (pre_activation, conv) = self.conv.forward(x, macs)?;
        let mut hidden = pre_activation.clone();
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let (y, linear) = self.linear.forward(&hidden, macs)?;
        Ok((
            y,
            FfnCache {
                conv,
                pre_activation,
                linear,
            },
        ))
    }

    fn backward(&self, cache: &FfnCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (mut dhidden, linear_grads) = self.linear.backward(&cache.linear, dy)?;
        dhidden
            .data_mut()
            .iter_mut()
            .zip(cache.pre_activation.data())
            .for_each(|(g, &p)| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
        let (dx, mut grads) = self.conv.backward(&cache.conv, &dhidden)?;
        grads.extend(linear_grads);
        Ok((dx, grads))
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut p: Vec<(&'static str, &Tensor)> = self
            .conv
            .params()
            .into_iter()
            .map(|(n, t)| (if n == "weight" { "conv.weight" } else { "conv.bias" }, t))
            .collect();
        p.extend(
            self.linear
                .params()
                .into_iter()
                .map(|(n, t)| (if n == "weight" { "linear.weight" } else { "linear.bias" }, t)),
        );
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.conv.params_mut();
        p.extend(self.linear.params_mut());
        p
    }
}
