use alloc::vec;
use alloc::vec::Vec;

use super::{check_cols, Kernel, MacCounter, Tensor};
use crate::error::Result;

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Per-row normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        LayerNorm {
            gain: Tensor::filled(&[width], 1.0),
            bias: Tensor::zeros(&[width]),
            eps: LAYERNORM_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gain.len()
    }
}

impl Kernel for LayerNorm {
    type Cache = LayerNormCache;

    fn forward(&self, x: &Tensor, _macs: &mut MacCounter) -> Result<(Tensor, LayerNormCache)> {
        let d = self.width();
        let rows = check_cols(x, d, "layernorm")?;
        let mut normalized = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut y = vec![0.0; rows * d];
        for r in 0..rows {
            let row = x.row(r);
            // Offsetting by the first element keeps constant rows exactly zero.
            let first = row[0];
            let mean = first + row.iter().map(|v| v - first).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / libm::sqrt(var + self.eps);
            inv_std[r] = s;
            for c in 0..d {
                let n = (row[c] - mean) * s;
                normalized[r * d + c] = n;
                y[r * d + c] = n * self.gain.data()[c] + self.bias.data()[c];
            }
        }
        Ok((Tensor::from_vec(&[rows, d], y)?, LayerNormCache { normalized, inv_std }))
    }

    fn backward(&self, cache: &LayerNormCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let d = self.width();
        let rows = check_cols(dy, d, "layernorm backward")?;
        let mut dgain = vec![0.0; d];
        let mut dbias = vec![0.0; d];
        let mut dx = vec![0.0; rows * d];
        let mut dn = vec![0.0; d];
        for r in 0..rows {
            let g = dy.row(r);
            let n = &cache.normalized[r * d..(r + 1) * d];
            for c in 0..d {
                dgain[c] += g[c] * n[c];
                dbias[c] += g[c];
                dn[c] = g[c] * self.gain.data()[c];
            }
            let sum_dn: f64 = dn.iter().sum();
            let sum_dn_n: f64 = dn.iter().zip(n).map(|(a, b)| a * b).sum();
            let s = cache.inv_std[r] / d as f64;
            for c in 0..d {
                dx[r * d + c] = s * (d as f64 * dn[c] - sum_dn - n[c] * sum_dn_n);
            }
        }
        Ok((
            Tensor::from_vec(&[rows, d], dx)?,
            vec![Tensor::from_vec(&[d], dgain)?, Tensor::from_vec(&[d], dbias)?],
        ))
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("gain", &self.gain), ("bias", &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gain, &mut self.bias]
    }
}
