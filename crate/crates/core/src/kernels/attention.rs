//! Multi-head self-attention without masking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{add_bias, check_cols, column_sums, gemm_acc, gemm_nt_acc, gemm_tn_acc, name};
use super::{Kernel, MacCounter, Tensor, WeightInit};
use crate::error::{Error, Result};

/// Query, key, value and output projections, each `width × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mhsa {
    heads: usize,
    pub w_query: Tensor,
    pub w_key: Tensor,
    pub w_value: Tensor,
    pub w_out: Tensor,
    /// Query, key, value and output biases, when present.
    pub biases: Option<[Tensor; 4]>,
}

#[derive(Debug, Clone)]
pub struct MhsaCache {
    input: Tensor,
    query: Vec<f64>,
    key: Vec<f64>,
    value: Vec<f64>,
    /// `heads × rows × rows`, each row a probability distribution.
    pub attention: Vec<f64>,
    context: Vec<f64>,
}

/// Copy columns `[h·dh, (h+1)·dh)` of a `rows × width` matrix.
fn head_slice(m: &[f64], rows: usize, width: usize, h: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * dh);
    for r in 0..rows {
        out.extend_from_slice(&m[r * width + h * dh..r * width + (h + 1) * dh]);
    }
    out
}

fn head_scatter_add(dst: &mut [f64], src: &[f64], rows: usize, width: usize, h: usize, dh: usize) {
    for r in 0..rows {
        let d = &mut dst[r * width + h * dh..r * width + (h + 1) * dh];
        d.iter_mut().zip(&src[r * dh..(r + 1) * dh]).for_each(|(a, b)| *a += b);
    }
}

fn softmax_rows(scores: &mut [f64], cols: usize) {
    for row in scores.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

impl Mhsa {
    pub fn new(width: usize, heads: usize, bias: bool, init: &WeightInit, prefix: &str) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(Error::Config(format!("{heads} heads do not divide width {width}")));
        }
        let proj = |leaf: &str| init.uniform(&name(prefix, leaf), &[width, width], width);
        let biases = bias.then(|| {
            ["bq", "bk", "bv", "bo"].map(|leaf| init.uniform(&name(prefix, leaf), &[width], width))
        });
        Ok(Mhsa {
            heads,
            w_query: proj("wq"),
            w_key: proj("wk"),
            w_value: proj("wv"),
            w_out: proj("wo"),
            biases,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn width(&self) -> usize {
        self.w_query.shape()[0]
    }

    pub fn has_bias(&self) -> bool {
        self.biases.is_some()
    }

    fn project(&self, x: &[f64], w: &Tensor, bias: Option<&Tensor>, rows: usize, macs: &mut MacCounter) -> Vec<f64> {
        let d = self.width();
        let mut out = vec![0.0; rows * d];
        gemm_acc(x, w.data(), &mut out, rows, d, d, macs);
        if let Some(b) = bias {
            add_bias(&mut out, b.data());
        }
        out
    }
}

impl Kernel for Mhsa {
    type Cache = MhsaCache;

    fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<(Tensor, MhsaCache)> {
        let d = self.width();
        let rows = check_cols(x, d, "mhsa")?;
        let (h, dh) = (self.heads, d / self.heads);
        let scale = 1.0 / libm::sqrt(dh as f64);
        let bias = |i: usize| self.biases.as_ref().map(|b| &b[i]);

        let query = self.project(x.data(), &self.w_query, bias(0), rows, macs);
        let key = self.project(x.data(), &self.w_key, bias(1), rows, macs);
        let value = self.project(x.data(), &self.w_value, bias(2), rows, macs);

        let mut attention = vec![0.0; h * rows * rows];
        let mut context = vec![0.0; rows * d];
        for head in 0..h {
            let q = head_slice(&query, rows, d, head, dh);
            let k = head_slice(&key, rows, d, head, dh);
            let v = head_slice(&value, rows, d, head, dh);
            let scores = &mut attention[head * rows * rows..(head + 1) * rows * rows];
            gemm_nt_acc(&q, &k, scores, rows, dh, rows, macs);
            scores.iter_mut().for_each(|s| *s *= scale);
            softmax_rows(scores, rows);
            let mut ctx = vec![0.0; rows * dh];
            gemm_acc(scores, &v, &mut ctx, rows, rows, dh, macs);
            head_scatter_add(&mut context, &ctx, rows, d, head, dh);
        }
        let y = self.project(&context, &self.w_out, bias(3), rows, macs);
        Ok((
            Tensor::from_vec(&[rows, d], y)?,
            MhsaCache {
                input: x.clone(),
                query,
                key,
                value,
                attention,
                context,
            },
        ))
    }

    fn backward(&self, cache: &MhsaCache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let d = self.width();
        let rows = check_cols(dy, d, "mhsa backward")?;
        let (h, dh) = (self.heads, d / self.heads);
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut scratch = MacCounter::new();

        let mut dw_out = vec![0.0; d * d];
        gemm_tn_acc(&cache.context, dy.data(), &mut dw_out, rows, d, d);
        let mut dcontext = vec![0.0; rows * d];
        gemm_nt_acc(dy.data(), self.w_out.data(), &mut dcontext, rows, d, d, &mut scratch);

        let mut dquery = vec![0.0; rows * d];
        let mut dkey = vec![0.0; rows * d];
        let mut dvalue = vec![0.0; rows * d];
        for head in 0..h {
            let q = head_slice(&cache.query, rows, d, head, dh);
            let k = head_slice(&cache.key, rows, d, head, dh);
            let v = head_slice(&cache.value, rows, d, head, dh);
            let dctx = head_slice(&dcontext, rows, d, head, dh);
            let attn = &cache.attention[head * rows * rows..(head + 1) * rows * rows];

            let mut dattn = vec![0.0; rows * rows];
            gemm_nt_acc(&dctx, &v, &mut dattn, rows, dh, rows, &mut scratch);
            let mut dv = vec![0.0; rows * dh];
            gemm_tn_acc(attn, &dctx, &mut dv, rows, rows, dh);

            // softmax backward, then the 1/sqrt(dh) scale
            for r in 0..rows {
                let a = &attn[r * rows..(r + 1) * rows];
                let g = &mut dattn[r * rows..(r + 1) * rows];
                let dot: f64 = a.iter().zip(g.iter()).map(|(x, y)| x * y).sum();
                g.iter_mut().zip(a).for_each(|(gv, av)| *gv = av * (*gv - dot) * scale);
            }
            let mut dq = vec![0.0; rows * dh];
            gemm_acc(&dattn, &k, &mut dq, rows, rows, dh, &mut scratch);
            let mut dk = vec![0.0; rows * dh];
            gemm_tn_acc(&dattn, &q, &mut dk, rows, rows, dh);

            head_scatter_add(&mut dquery, &dq, rows, d, head, dh);
            head_scatter_add(&mut dkey, &dk, rows, d, head, dh);
            head_scatter_add(&mut dvalue, &dv, rows, d, head, dh);
        }

        let x = cache.input.data();
        let mut dx = vec![0.0; rows * d];
        let mut weight_grads = Vec::with_capacity(4);
        for (dproj, w) in [(&dquery, &self.w_query), (&dkey, &self.w_key), (&dvalue, &self.w_value)] {
            let mut dw = vec![0.0; d * d];
            gemm_tn_acc(x, dproj, &mut dw, rows, d, d);
            gemm_nt_acc(dproj, w.data(), &mut dx, rows, d, d, &mut scratch);
            weight_grads.push(Tensor::from_vec(&[d, d], dw)?);
        }
        weight_grads.push(Tensor::from_vec(&[d, d], dw_out)?);
        if self.biases.is_some() {
            for dproj in [&dquery, &dkey, &dvalue, dy.data()] {
                weight_grads.push(Tensor::from_vec(&[d], column_sums(dproj, d))?);
            }
        }
        Ok((Tensor::from_vec(&[rows, d], dx)?, weight_grads))
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        let mut p = vec![
            ("wq", &self.w_query),
            ("wk", &self.w_key),
            ("wv", &self.w_value),
            ("wo", &self.w_out),
        ];
        if let Some([bq, bk, bv, bo]) = &self.biases {
            p.extend([("bq", bq), ("bk", bk), ("bv", bv), ("bo", bo)]);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.w_query, &mut self.w_key, &mut self.w_value, &mut self.w_out];
        if let Some(b) = &mut self.biases {
            p.extend(b.iter_mut());
        }
        p
    }
}
