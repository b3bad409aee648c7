use alloc::format;

use super::{name, Tensor, WeightInit};
use crate::error::{Error, Result};

/// Token lookup table, `vocab × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    pub fn new(vocab: usize, width: usize, init: &WeightInit, prefix: &str) -> Self {
        Embedding {
            table: init.uniform(&name(prefix, "table"), &[vocab, width], 1),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn forward(&self, tokens: &[usize]) -> Result<Tensor> {
        let d = self.width();
        let mut out = Tensor::zeros(&[tokens.len(), d]);
        for (r, &tok) in tokens.iter().enumerate() {
            if tok >= self.vocab() {
                return Err(Error::Shape(format!("token {tok} outside vocabulary of {}", self.vocab())));
            }
            out.data_mut()[r * d..(r + 1) * d].copy_from_slice(self.table.row(tok));
        }
        Ok(out)
    }

    /// Gradient of the table for upstream gradient `dy`.
    pub fn backward(&self, tokens: &[usize], dy: &Tensor) -> Result<Tensor> {
        let d = self.width();
        let mut grad = Tensor::zeros(self.table.shape());
        for (r, &tok) in tokens.iter().enumerate() {
            let g = &mut grad.data_mut()[tok * d..(tok + 1) * d];
            g.iter_mut().zip(dy.row(r)).for_each(|(a, b)| *a += b);
        }
        Ok(grad)
    }
}
