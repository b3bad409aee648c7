//! Single-path weight-sharing supernet on a synthetic sequence-regression task.
//!
//! Every slot owns one weight set per vocabulary entry. A training step draws one
//! architecture uniformly and updates only the weights it routes through, plus
//! the shared trunk (token embedding, per-slot layer norms, output head).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    Embedding, Kernel, LayerNorm, LayerNormCache, Linear, LinearCache, MacCounter, OpCache, OpInstance, SlotDims,
    Tensor, WeightInit,
};
use crate::model::sinusoid_table;
use crate::rng;
use crate::searchspace::{Architecture, OpCode, SpaceDef};

/// Initial-weight scale of the frozen teacher.
pub const TEACHER_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyDims {
    pub hidden: usize,
    pub length: usize,
    pub vocab: usize,
    pub ffn_filter: usize,
    pub ffn_kernel: usize,
    pub target_dim: usize,
}

impl Default for ToyDims {
    fn default() -> Self {
        ToyDims {
            hidden: 32,
            length: 24,
            vocab: 40,
            ffn_filter: 64,
            ffn_kernel: 3,
            target_dim: 4,
        }
    }
}

impl ToyDims {
    pub fn slot_dims(&self) -> SlotDims {
        SlotDims {
            hidden: self.hidden,
            ffn_filter: self.ffn_filter,
            ffn_kernel: self.ffn_kernel,
            bias: true,
        }
    }

    pub fn validate(&self, space: &SpaceDef) -> Result<()> {
        if self.hidden == 0 || self.length == 0 || self.vocab == 0 || self.ffn_filter == 0 || self.target_dim == 0 {
            return Err(Error::Config("toy dimensions must be positive".into()));
        }
        if self.ffn_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("ffn_kernel must be odd, got {}", self.ffn_kernel)));
        }
        space.vocabulary.iter().try_for_each(|op| op.check_hidden(self.hidden))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 8,
            lr: 0.2,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 {
            return Err(Error::Config("steps and batch must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("lr must be ≥ 0 and clip_norm > 0".into()));
        }
        Ok(())
    }
}

/// One labelled architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub arch: Architecture,
    pub val_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    /// `length × target_dim`.
    pub target: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { train: 256, dev: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub teacher_arch: Architecture,
    /// Frozen network that produced the targets; only `teacher_arch`'s ops matter.
    pub teacher: SupernetState,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Draw token sequences, push them through a frozen random teacher routed by
/// `teacher_arch`, and add Gaussian noise. Train and dev sequences are distinct.
pub fn make_synth_dataset(
    space: &SpaceDef,
    dims: ToyDims,
    teacher_arch: &Architecture,
    seed: u64,
    sizes: SplitSizes,
    noise_sigma: f64,
) -> Result<SynthDataset> {
    teacher_arch.validate(space)?;
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::Config(format!("noise_sigma must be ≥ 0, got {noise_sigma}")));
    }
    if sizes.train == 0 || sizes.dev == 0 {
        return Err(Error::Config("train and dev splits must be nonempty".into()));
    }
    let teacher = SupernetState::with_gain(space, dims, rng::derive_seed(seed, "teacher"), TEACHER_GAIN)?;
    let route = teacher.route(teacher_arch)?;
    let mut tokens_rng = rng::stream(seed, "dataset.tokens");
    let mut noise_rng = rng::stream(seed, "dataset.noise");
    let mut seen = BTreeSet::new();
    let mut draw = |count: usize| -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > 100 * count + 100 {
                return Err(Error::Config("token space too small for disjoint splits".into()));
            }
            let tokens: Vec<usize> = (0..dims.length).map(|_| tokens_rng.random_range(0..dims.vocab)).collect();
            if !seen.insert(tokens.clone()) {
                continue;
            }
            let mut target = teacher.forward(&route, &tokens)?;
            for v in target.data_mut() {
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                *v += noise_sigma * z;
            }
            out.push(Sample { tokens, target });
        }
        Ok(out)
    };
    let train = draw(sizes.train)?;
    let dev = draw(sizes.dev)?;
    Ok(SynthDataset {
        train,
        dev,
        teacher_arch: teacher_arch.clone(),
        teacher,
        noise_sigma,
        seed,
    })
}

struct Trace {
    tokens: Vec<usize>,
    slots: Vec<(LayerNormCache, OpCache)>,
    final_norm: LayerNormCache,
    head: LinearCache,
}

/// Gradients for the weights one architecture touches.
struct Grads {
    embedding: Tensor,
    norms: Vec<Vec<Tensor>>,
    ops: Vec<Vec<Tensor>>,
    final_norm: Vec<Tensor>,
    head: Vec<Tensor>,
}

impl Grads {
    fn all(&self) -> impl Iterator<Item = &Tensor> {
        core::iter::once(&self.embedding)
            .chain(self.norms.iter().flatten())
            .chain(self.ops.iter().flatten())
            .chain(&self.final_norm)
            .chain(&self.head)
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        core::iter::once(&mut self.embedding)
            .chain(self.norms.iter_mut().flatten())
            .chain(self.ops.iter_mut().flatten())
            .chain(&mut self.final_norm)
            .chain(&mut self.head)
    }

    fn accumulate(&mut self, other: Grads) -> Result<()> {
        for (a, b) in self.all_mut().zip(other.all()) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupernetState {
    pub space: SpaceDef,
    pub dims: ToyDims,
    pub embedding: Embedding,
    pub norms: Vec<LayerNorm>,
    /// `ops[slot][vocabulary index]`.
    pub ops: Vec<Vec<OpInstance>>,
    pub final_norm: LayerNorm,
    pub head: Linear,
    pub step: u64,
    positions: Tensor,
}

impl SupernetState {
    pub fn new(space: &SpaceDef, dims: ToyDims, seed: u64) -> Result<Self> {
        Self::with_gain(space, dims, seed, 1.0)
    }

    pub fn with_gain(space: &SpaceDef, dims: ToyDims, seed: u64, gain: f64) -> Result<Self> {
        dims.validate(space)?;
        let init = WeightInit::new(seed).with_gain(gain);
        let d = dims.hidden;
        let ops = (0..space.slots())
            .map(|s| {
                space
                    .vocabulary
                    .iter()
                    .map(|&op| OpInstance::for_code(op, dims.slot_dims(), &init, &format!("slot{s}.{op}")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SupernetState {
            space: space.clone(),
            dims,
            embedding: Embedding::new(dims.vocab, d, &init, "embedding"),
            norms: (0..space.slots()).map(|_| LayerNorm::new(d)).collect(),
            ops,
            final_norm: LayerNorm::new(d),
            head: Linear::new(d, dims.target_dim, true, &init, "head"),
            step: 0,
            positions: sinusoid_table(dims.length, d),
        })
    }

    /// Vocabulary index per slot.
    pub fn route(&self, arch: &Architecture) -> Result<Vec<usize>> {
        arch.validate(&self.space)?;
        Ok(arch.ops().map(|op| self.space.index_of(op).expect("validated")).collect())
    }

    fn embed(&self, tokens: &[usize]) -> Result<Tensor> {
        if tokens.len() != self.dims.length {
            return Err(Error::Shape(format!(
                "sequence of {} tokens, expected {}",
                tokens.len(),
                self.dims.length
            )));
        }
        let mut h = self.embedding.forward(tokens)?;
        h.add_assign(&self.positions)?;
        Ok(h)
    }

    /// Output sequence for one token sequence under a routed architecture.
    pub fn forward(&self, route: &[usize], tokens: &[usize]) -> Result<Tensor> {
        let macs = &mut MacCounter::new();
        let mut h = self.embed(tokens)?;
        for (s, &op) in route.iter().enumerate() {
            let normed = self.norms[s].forward(&h, macs)?.0;
            h.add_assign(&self.ops[s][op].apply(&normed, macs)?)?;
        }
        let normed = self.final_norm.forward(&h, macs)?.0;
        Ok(self.head.forward(&normed, macs)?.0)
    }

    fn forward_traced(&self, route: &[usize], tokens: &[usize]) -> Result<(Tensor, Trace)> {
        let macs = &mut MacCounter::new();
        let mut h = self.embed(tokens)?;
        let mut slots = Vec::with_capacity(route.len());
        for (s, &op) in route.iter().enumerate() {
            let (normed, norm_cache) = self.norms[s].forward(&h, macs)?;
            let (out, op_cache) = self.ops[s][op].forward(&normed, macs)?;
            h.add_assign(&out)?;
            slots.push((norm_cache, op_cache));
        }
        let (normed, final_norm) = self.final_norm.forward(&h, macs)?;
        let (y, head) = self.head.forward(&normed, macs)?;
        Ok((
            y,
            Trace {
                tokens: tokens.into(),
                slots,
                final_norm,
                head,
            },
        ))
    }

    fn backward(&self, route: &[usize], trace: &Trace, dy: &Tensor) -> Result<Grads> {
        let (dnormed, head) = self.head.backward(&trace.head, dy)?;
        let (mut dh, final_norm) = self.final_norm.backward(&trace.final_norm, &dnormed)?;
        let mut norms = vec![Vec::new(); route.len()];
        let mut ops = vec![Vec::new(); route.len()];
        for (s, &op) in route.iter().enumerate().rev() {
            let (norm_cache, op_cache) = &trace.slots[s];
            let (dn, op_grads) = self.ops[s][op].backward(op_cache, &dh)?;
            let (dx, norm_grads) = self.norms[s].backward(norm_cache, &dn)?;
            dh.add_assign(&dx)?;
            norms[s] = norm_grads;
            ops[s] = op_grads;
        }
        Ok(Grads {
            embedding: self.embedding.backward(&trace.tokens, &dh)?,
            norms,
            ops,
            final_norm,
            head,
        })
    }

    fn apply_update(&mut self, route: &[usize], grads: &Grads, lr: f64) {
        let mut params: Vec<&mut Tensor> = vec![&mut self.embedding.table];
        for norm in &mut self.norms {
            params.extend(norm.params_mut());
        }
        for (ops, &op) in self.ops.iter_mut().zip(route) {
            params.extend(ops[op].params_mut());
        }
        params.extend(self.final_norm.params_mut());
        params.extend(self.head.params_mut());
        for (p, g) in params.into_iter().zip(grads.all()) {
            debug_assert_eq!(p.shape(), g.shape());
            p.data_mut().iter_mut().zip(g.data()).for_each(|(w, g)| *w -= lr * g);
        }
    }

    fn weights_finite(&self, route: &[usize]) -> bool {
        self.embedding.table.is_finite()
            && route.iter().enumerate().all(|(s, &op)| {
                self.norms[s].params().iter().all(|(_, t)| t.is_finite())
                    && self.ops[s][op].params().iter().all(|(_, t)| t.is_finite())
            })
            && self.head.params().iter().all(|(_, t)| t.is_finite())
            && self.final_norm.params().iter().all(|(_, t)| t.is_finite())
    }

    /// Mean squared error over a split, routing through `arch`.
    pub fn loss(&self, arch: &Architecture, samples: &[Sample]) -> Result<f64> {
        let route = self.route(arch)?;
        if samples.is_empty() {
            return Err(Error::Data("cannot evaluate on an empty split".into()));
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for sample in samples {
            let y = self.forward(&route, &sample.tokens)?;
            total += y
                .data()
                .iter()
                .zip(sample.target.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            count += y.len();
        }
        Ok(total / count as f64)
    }

    /// Every stored tensor with a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![(String::from("embedding.table"), &self.embedding.table)];
        for (s, norm) in self.norms.iter().enumerate() {
            out.extend(norm.params().into_iter().map(|(n, t)| (format!("slot{s}.norm.{n}"), t)));
        }
        for (s, ops) in self.ops.iter().enumerate() {
            for (op, inst) in self.space.vocabulary.iter().zip(ops) {
                out.extend(inst.params().into_iter().map(|(n, t)| (format!("slot{s}.{op}.{n}"), t)));
            }
        }
        out.extend(self.final_norm.params().into_iter().map(|(n, t)| (format!("final_norm.{n}"), t)));
        out.extend(self.head.params().into_iter().map(|(n, t)| (format!("head.{n}"), t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding.table];
        for norm in &mut self.norms {
            out.extend(norm.params_mut());
        }
        for ops in &mut self.ops {
            for inst in ops {
                out.extend(inst.params_mut());
            }
        }
        out.extend(self.final_norm.params_mut());
        out.extend(self.head.params_mut());
        out
    }

    /// Replace all weights, in [`Self::named_tensors`] order. Names and shapes must match.
    pub fn load_named(&mut self, tensors: Vec<(String, Tensor)>) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, supernet has {}",
                tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(&tensors) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::Data(format!(
                    "checkpoint tensor {got_name} {:?} does not match {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("checkpoint tensor {name}")));
            }
        }
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(tensors) {
            *dst = src;
        }
        Ok(())
    }

    /// Hash over every weight bit.
    pub fn fingerprint(&self) -> u64 {
        rng::fingerprint(self.named_tensors().into_iter().flat_map(|(_, t)| t.data()))
    }

    /// Hash of one slot's weights for vocabulary entry `op`.
    pub fn op_fingerprint(&self, slot: usize, op: usize) -> u64 {
        self.ops[slot][op].fingerprint()
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

fn sample_route(space: &SpaceDef, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    (0..space.slots())
        .map(|_| rng.random_range(0..space.vocabulary.len()))
        .collect()
}

fn route_arch(space: &SpaceDef, route: &[usize]) -> Architecture {
    let ops: Vec<OpCode> = route.iter().map(|&i| space.vocabulary[i]).collect();
    let (enc, dec) = ops.split_at(space.encoder_slots);
    Architecture::new(enc.to_vec(), dec.to_vec())
}

/// Per-step training losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub losses: Vec<f64>,
}

/// Single-path SGD: each step draws an architecture uniformly and a batch of
/// training sequences, and updates the selected ops plus the shared trunk.
pub fn train_supernet(
    state: &mut SupernetState,
    dataset: &SynthDataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainLog> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(Error::Data("empty training split".into()));
    }
    let mut rng = rng::stream(seed, &format!("train_supernet.{}", state.step));
    let mut log = TrainLog::default();
    for _ in 0..config.steps {
        let route = sample_route(&state.space, &mut rng);
        let picks: Vec<usize> = (0..config.batch)
            .map(|_| rng.random_range(0..dataset.train.len()))
            .collect();
        let count = (config.batch * state.dims.length * state.dims.target_dim) as f64;
        let mut grads: Option<Grads> = None;
        let mut loss = 0.0;
        for &i in &picks {
            let sample = &dataset.train[i];
            let (y, trace) = state.forward_traced(&route, &sample.tokens)?;
            let mut dy = y.clone();
            for (g, t) in dy.data_mut().iter_mut().zip(sample.target.data()) {
                let diff = *g - t;
                loss += diff * diff;
                *g = 2.0 * diff / count;
            }
            let g = state.backward(&route, &trace, &dy)?;
            match &mut grads {
                Some(acc) => acc.accumulate(g)?,
                None => grads = Some(g),
            }
        }
        loss /= count;
        let diverged = |state: &SupernetState, loss: f64| Error::Diverged {
            step: state.step,
            arch: format!("{}", route_arch(&state.space, &route)),
            loss,
        };
        let mut grads = grads.expect("batch is nonempty");
        let norm = libm::sqrt(grads.all().map(Tensor::sum_sq).sum::<f64>());
        if !loss.is_finite() || !norm.is_finite() {
            return Err(diverged(state, loss));
        }
        if norm > config.clip_norm {
            let factor = config.clip_norm / norm;
            grads.all_mut().for_each(|g| g.scale(factor));
        }
        if config.lr != 0.0 {
            state.apply_update(&route, &grads, config.lr);
            if !state.weights_finite(&route) {
                return Err(diverged(state, loss));
            }
        }
        state.step += 1;
        log.losses.push(loss);
    }
    Ok(log)
}

/// Dev-split MSE for `arch` using the supernet's shared weights.
pub fn evaluate_arch(state: &SupernetState, arch: &Architecture, dataset: &SynthDataset) -> Result<EvalRecord> {
    let val_loss = state.loss(arch, &dataset.dev)?;
    if !val_loss.is_finite() {
        return Err(Error::NonFinite(format!("validation loss of {arch}")));
    }
    Ok(EvalRecord {
        arch: arch.clone(),
        val_loss,
        seed: dataset.seed,
    })
}

pub fn evaluate_batch(state: &SupernetState, archs: &[Architecture], dataset: &SynthDataset) -> Result<Vec<EvalRecord>> {
    archs.iter().map(|a| evaluate_arch(state, a, dataset)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::sample_uniform;

    fn small_dims() -> ToyDims {
        ToyDims {
            hidden: 8,
            length: 6,
            vocab: 10,
            ffn_filter: 12,
            ffn_kernel: 3,
            target_dim: 2,
        }
    }

    fn tiny_space() -> SpaceDef {
        SpaceDef::new(
            1,
            1,
            vec![OpCode::Mhsa { heads: 2 }, OpCode::SepConv { kernel: 5 }, OpCode::Ffn],
        )
        .unwrap()
    }

    fn dataset(space: &SpaceDef, sigma: f64, seed: u64) -> SynthDataset {
        let teacher = sample_uniform(space, seed, 1).remove(0);
        make_synth_dataset(space, small_dims(), &teacher, seed, SplitSizes { train: 32, dev: 16 }, sigma).unwrap()
    }

    #[test]
    fn weight_sets_per_slot_and_op() {
        let space = SpaceDef::default();
        let state = SupernetState::new(&space, ToyDims::default(), 0).unwrap();
        assert_eq!(state.ops.len(), 8);
        assert!(state.ops.iter().all(|o| o.len() == 11));
    }

    #[test]
    fn teacher_reproduces_noiseless_targets() {
        let space = tiny_space();
        let data = dataset(&space, 0.0, 2);
        let loss = data.teacher.loss(&data.teacher_arch, &data.dev).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn dataset_is_deterministic_and_disjoint() {
        let space = tiny_space();
        let a = dataset(&space, 0.1, 5);
        let b = dataset(&space, 0.1, 5);
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
        let train: BTreeSet<_> = a.train.iter().map(|s| s.tokens.clone()).collect();
        assert!(a.dev.iter().all(|s| !train.contains(&s.tokens)));
    }

    #[test]
    fn target_variance_adds_noise() {
        let space = tiny_space();
        let sigma = 0.7;
        let clean = dataset(&space, 0.0, 8);
        let noisy = dataset(&space, sigma, 8);
        let var = |xs: Vec<f64>| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
        };
        let teacher_var = var(clean.dev.iter().flat_map(|s| s.target.data().to_vec()).collect());
        let target_var = var(noisy.dev.iter().flat_map(|s| s.target.data().to_vec()).collect());
        let expect = teacher_var + sigma * sigma;
        assert!((target_var - expect).abs() <= 0.2 * expect, "{target_var} vs {expect}");
    }

    #[test]
    fn zero_lr_leaves_weights_unchanged() {
        let space = tiny_space();
        let data = dataset(&space, 0.01, 1);
        let mut state = SupernetState::new(&space, small_dims(), 3).unwrap();
        let before = state.clone();
        let cfg = TrainConfig {
            steps: 5,
            lr: 0.0,
            ..TrainConfig::default()
        };
        train_supernet(&mut state, &data, &cfg, 0).unwrap();
        assert_eq!(state.named_tensors(), before.named_tensors());
        assert_eq!(state.step, 5);
    }

    #[test]
    fn training_touches_only_selected_ops() {
        let space = SpaceDef::default();
        let data = dataset(&space, 0.01, 4);
        let mut state = SupernetState::new(&space, small_dims(), 5).unwrap();
        for step in 0..5u64 {
            let before: Vec<Vec<u64>> = (0..space.slots())
                .map(|s| (0..11).map(|o| state.op_fingerprint(s, o)).collect())
                .collect();
            let mut probe = rng::stream(step, &format!("train_supernet.{}", state.step));
            let route = sample_route(&space, &mut probe);
            let cfg = TrainConfig {
                steps: 1,
                ..TrainConfig::default()
            };
            train_supernet(&mut state, &data, &cfg, step).unwrap();
            for s in 0..space.slots() {
                for (o, &old) in before[s].iter().enumerate() {
                    let changed = state.op_fingerprint(s, o) != old;
                    assert_eq!(changed, o == route[s], "slot {s} op {o}");
                }
            }
        }
    }

    #[test]
    fn training_reduces_loss_on_single_op_space() {
        let space = SpaceDef::new(1, 1, vec![OpCode::SepConv { kernel: 5 }]).unwrap();
        let data = dataset(&space, 0.01, 6);
        let arch = Architecture::parse_any("enc:[sep5];dec:[sep5]").unwrap();
        let mut state = SupernetState::new(&space, small_dims(), 7).unwrap();
        let before = state.loss(&arch, &data.train).unwrap();
        let cfg = TrainConfig {
            steps: 500,
            ..TrainConfig::default()
        };
        train_supernet(&mut state, &data, &cfg, 1).unwrap();
        assert!(state.loss(&arch, &data.train).unwrap() < before);
    }

    #[test]
    fn training_is_deterministic() {
        let space = tiny_space();
        let data = dataset(&space, 0.01, 9);
        let run = || {
            let mut state = SupernetState::new(&space, small_dims(), 1).unwrap();
            let cfg = TrainConfig {
                steps: 30,
                ..TrainConfig::default()
            };
            let log = train_supernet(&mut state, &data, &cfg, 4).unwrap();
            (log, state.fingerprint())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_reports_step_and_arch() {
        let space = tiny_space();
        let mut data = dataset(&space, 0.01, 9);
        data.train[0].target.data_mut()[0] = f64::INFINITY;
        data.train.truncate(1);
        let mut state = SupernetState::new(&space, small_dims(), 1).unwrap();
        let cfg = TrainConfig {
            steps: 3,
            ..TrainConfig::default()
        };
        match train_supernet(&mut state, &data, &cfg, 0) {
            Err(Error::Diverged { step, arch, .. }) => {
                assert_eq!(step, 0);
                assert!(arch.starts_with("enc:["));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn evaluation_is_pure_and_batched() {
        let space = tiny_space();
        let data = dataset(&space, 0.01, 10);
        let state = SupernetState::new(&space, small_dims(), 2).unwrap();
        let before = state.fingerprint();
        let archs = crate::searchspace::enumerate(&space, 0, 9).unwrap();
        let batch = evaluate_batch(&state, &archs, &data).unwrap();
        assert_eq!(state.fingerprint(), before);
        for (a, r) in archs.iter().zip(&batch) {
            let single = evaluate_arch(&state, a, &data).unwrap();
            assert_eq!(&single, r);
            assert!(r.val_loss >= 0.0);
        }
        let mut reversed = archs.clone();
        reversed.reverse();
        let mut back = evaluate_batch(&state, &reversed, &data).unwrap();
        back.reverse();
        assert_eq!(back, batch);
    }

    #[test]
    fn checkpoint_round_trip() {
        let space = tiny_space();
        let a = SupernetState::new(&space, small_dims(), 1).unwrap();
        let mut b = SupernetState::new(&space, small_dims(), 2).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        let tensors = a.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        b.load_named(tensors).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut bad: Vec<(String, Tensor)> = a.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        bad[0].0 = "nope".into();
        assert!(b.load_named(bad).is_err());
    }
}
