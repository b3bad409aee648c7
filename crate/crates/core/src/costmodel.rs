//! Analytical parameter and multiply-accumulate accounting.
//!
//! Conventions:
//! - one MAC is one multiply plus one add; a linear map `L×I → L×O` costs `L·I·O`;
//! - dense convolution costs `L·K·I·O`, depthwise separable `L·(K·I + I·O)`;
//! - attention costs `4·L·d² + 2·L²·d`;
//! - softmax, normalization, activations, bias adds and lookups cost nothing;
//! - encoder slots and the duration predictor run at phoneme length, decoder
//!   slots and the mel projection at frame length, pitch/energy predictors at
//!   frame length unless `pitch_at_phoneme_level` is set.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SlotDims;
use crate::searchspace::{Architecture, OpCode};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    Vanilla,
    Sepconv,
}

/// Stack of `layers × (conv → ReLU → LayerNorm)` followed by a `filter → 1` projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSpec {
    pub layers: usize,
    pub kernel: usize,
    pub filter: usize,
    pub conv: ConvKind,
}

impl PredictorSpec {
    pub fn duration(filter: usize, conv: ConvKind) -> Self {
        PredictorSpec {
            layers: 2,
            kernel: 3,
            filter,
            conv,
        }
    }

    /// Pitch and energy predictors share this shape.
    pub fn pitch(filter: usize, conv: ConvKind) -> Self {
        PredictorSpec {
            layers: 5,
            kernel: 5,
            filter,
            conv,
        }
    }

    fn layer_op(&self, layer: usize, hidden: usize) -> CostOp {
        let input = if layer == 0 { hidden } else { self.filter };
        match self.conv {
            ConvKind::Vanilla => CostOp::Conv1d {
                kernel: self.kernel,
                input,
                output: self.filter,
            },
            ConvKind::Sepconv => CostOp::SepConv {
                kernel: self.kernel,
                input,
                output: self.filter,
            },
        }
    }
}

fn default_phoneme_vocab() -> usize {
    84
}
fn default_mel_dim() -> usize {
    80
}
fn default_true() -> bool {
    true
}
fn default_max_positions() -> usize {
    1000
}
fn default_pitch_bins() -> usize {
    256
}

/// Full model description for cost accounting and instantiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub hidden: usize,
    pub architecture: Architecture,
    #[serde(default = "default_phoneme_vocab")]
    pub phoneme_vocab: usize,
    #[serde(default = "default_mel_dim")]
    pub mel_dim: usize,
    pub ffn_filter: usize,
    pub ffn_kernel: usize,
    pub duration_predictor: PredictorSpec,
    pub pitch_predictor: PredictorSpec,
    #[serde(default)]
    pub energy_predictor: Option<PredictorSpec>,
    #[serde(default = "default_true")]
    pub include_bias: bool,
    #[serde(default = "default_true")]
    pub include_layernorm: bool,
    #[serde(default)]
    pub pitch_at_phoneme_level: bool,
    /// Rows in each stored positional table are `max_positions + 1`.
    #[serde(default = "default_max_positions")]
    pub max_positions: usize,
    #[serde(default = "default_pitch_bins")]
    pub pitch_bins: usize,
}

fn transformer_blocks(blocks: usize, heads: u8) -> Vec<OpCode> {
    (0..blocks)
        .flat_map(|_| [OpCode::Mhsa { heads }, OpCode::Ffn])
        .collect()
}

impl ModelConfig {
    /// Four attention + feed-forward blocks per side, hidden 256, filter 1024.
    pub fn fastspeech2() -> Self {
        ModelConfig {
            version: CONFIG_VERSION,
            name: "FastSpeech 2".into(),
            hidden: 256,
            architecture: Architecture::new(transformer_blocks(4, 2), transformer_blocks(4, 2)),
            phoneme_vocab: default_phoneme_vocab(),
            mel_dim: default_mel_dim(),
            ffn_filter: 1024,
            ffn_kernel: 9,
            duration_predictor: PredictorSpec::duration(256, ConvKind::Vanilla),
            pitch_predictor: PredictorSpec::pitch(256, ConvKind::Vanilla),
            energy_predictor: Some(PredictorSpec::pitch(256, ConvKind::Vanilla)),
            include_bias: true,
            include_layernorm: true,
            pitch_at_phoneme_level: false,
            max_positions: default_max_positions(),
            pitch_bins: default_pitch_bins(),
        }
    }

    /// The shallow hand-designed baseline: two blocks per side, hidden 128,
    /// filter 256, no energy predictor, separable predictors.
    pub fn fastspeech2_small() -> Self {
        ModelConfig {
            name: "FastSpeech 2*".into(),
            hidden: 128,
            architecture: Architecture::new(transformer_blocks(2, 2), transformer_blocks(2, 2)),
            ffn_filter: 256,
            duration_predictor: PredictorSpec::duration(128, ConvKind::Sepconv),
            pitch_predictor: PredictorSpec::pitch(128, ConvKind::Sepconv),
            energy_predictor: None,
            ..Self::fastspeech2()
        }
    }

    /// The searched genotype at hidden 256 with separable predictors.
    pub fn lightspeech() -> Self {
        ModelConfig {
            name: "LightSpeech".into(),
            architecture: Architecture::discovered(),
            duration_predictor: PredictorSpec::duration(256, ConvKind::Sepconv),
            pitch_predictor: PredictorSpec::pitch(256, ConvKind::Sepconv),
            energy_predictor: None,
            ..Self::fastspeech2()
        }
    }

    pub fn slot_dims(&self) -> SlotDims {
        SlotDims {
            hidden: self.hidden,
            ffn_filter: self.ffn_filter,
            ffn_kernel: self.ffn_kernel,
            bias: self.include_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let positive = [
            ("hidden", self.hidden),
            ("phoneme_vocab", self.phoneme_vocab),
            ("mel_dim", self.mel_dim),
            ("ffn_filter", self.ffn_filter),
            ("pitch_bins", self.pitch_bins),
        ];
        if let Some((field, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{field} must be positive")));
        }
        if self.ffn_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("ffn_kernel must be odd, got {}", self.ffn_kernel)));
        }
        for op in self.architecture.ops() {
            op.check_hidden(self.hidden)?;
        }
        let predictors = [
            Some(("duration_predictor", self.duration_predictor)),
            Some(("pitch_predictor", self.pitch_predictor)),
            self.energy_predictor.map(|p| ("energy_predictor", p)),
        ];
        for (field, p) in predictors.into_iter().flatten() {
            if p.layers == 0 || p.filter == 0 || p.kernel % 2 == 0 {
                return Err(Error::Config(format!(
                    "{field} needs at least one layer, a positive filter and an odd kernel"
                )));
            }
        }
        Ok(())
    }

    fn norm_params(&self, width: usize) -> u64 {
        if self.include_layernorm {
            op_params(CostOp::LayerNorm { width }, self.slot_dims())
        } else {
            0
        }
    }

    fn slots_params(&self, ops: &[OpCode]) -> u64 {
        ops.iter()
            .map(|&op| op_params(CostOp::Slot(op), self.slot_dims()) + self.norm_params(self.hidden))
            .sum()
    }

    fn slots_macs(&self, ops: &[OpCode], length: u64) -> u64 {
        ops.iter()
            .map(|&op| op_macs(CostOp::Slot(op), self.slot_dims(), length))
            .sum()
    }

    fn predictor_params(&self, spec: &PredictorSpec) -> u64 {
        let dims = self.slot_dims();
        let layers: u64 = (0..spec.layers)
            .map(|l| op_params(spec.layer_op(l, self.hidden), dims) + self.norm_params(spec.filter))
            .sum();
        layers
            + op_params(
                CostOp::Linear {
                    input: spec.filter,
                    output: 1,
                },
                dims,
            )
    }

    fn predictor_macs(&self, spec: &PredictorSpec, length: u64) -> u64 {
        let dims = self.slot_dims();
        let layers: u64 = (0..spec.layers)
            .map(|l| op_macs(spec.layer_op(l, self.hidden), dims, length))
            .sum();
        layers
            + op_macs(
                CostOp::Linear {
                    input: spec.filter,
                    output: 1,
                },
                dims,
                length,
            )
    }
}

/// An operation whose parameters and MACs can be priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostOp {
    /// A searched operation at the slot width.
    Slot(OpCode),
    Conv1d { kernel: usize, input: usize, output: usize },
    SepConv { kernel: usize, input: usize, output: usize },
    Linear { input: usize, output: usize },
    LayerNorm { width: usize },
    Embedding { vocab: usize, width: usize },
}

/// Parameter count of one operation. Biases are included when `dims.bias` is set;
/// for separable convolutions only the pointwise stage carries a bias.
pub fn op_params(op: CostOp, dims: SlotDims) -> u64 {
    let b = |n: usize| if dims.bias { n as u64 } else { 0 };
    let d = dims.hidden as u64;
    match op {
        CostOp::Slot(OpCode::Mhsa { .. }) => 4 * d * d + b(4 * dims.hidden),
        CostOp::Slot(OpCode::SepConv { kernel }) => u64::from(kernel) * d + d * d + b(dims.hidden),
        CostOp::Slot(OpCode::Ffn) => {
            let f = dims.ffn_filter as u64;
            dims.ffn_kernel as u64 * d * f + f * d + b(dims.ffn_filter + dims.hidden)
        }
        CostOp::Conv1d { kernel, input, output } => (kernel * input * output) as u64 + b(output),
        CostOp::SepConv { kernel, input, output } => (kernel * input + input * output) as u64 + b(output),
        CostOp::Linear { input, output } => (input * output) as u64 + b(output),
        CostOp::LayerNorm { width } => 2 * width as u64,
        CostOp::Embedding { vocab, width } => (vocab * width) as u64,
    }
}

/// Multiply-accumulates of one operation over a sequence of `length` rows.
pub fn op_macs(op: CostOp, dims: SlotDims, length: u64) -> u64 {
    let d = dims.hidden as u64;
    let l = length;
    match op {
        CostOp::Slot(OpCode::Mhsa { .. }) => 4 * l * d * d + 2 * l * l * d,
        CostOp::Slot(OpCode::SepConv { kernel }) => l * (u64::from(kernel) * d + d * d),
        CostOp::Slot(OpCode::Ffn) => {
            let f = dims.ffn_filter as u64;
            l * (dims.ffn_kernel as u64 * d * f + f * d)
        }
        CostOp::Conv1d { kernel, input, output } => l * (kernel * input * output) as u64,
        CostOp::SepConv { kernel, input, output } => l * (kernel * input + input * output) as u64,
        CostOp::Linear { input, output } => l * (input * output) as u64,
        CostOp::LayerNorm { .. } | CostOp::Embedding { .. } => 0,
    }
}

/// Sequence lengths and audio framing for MAC and RTF queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacsQuery {
    pub input_length: usize,
    pub output_length: usize,
    pub hop: usize,
    pub sample_rate: usize,
}

impl Default for MacsQuery {
    fn default() -> Self {
        MacsQuery {
            input_length: 128,
            output_length: 740,
            hop: 256,
            sample_rate: 22050,
        }
    }
}

impl MacsQuery {
    pub fn new(input_length: usize, output_length: usize) -> Self {
        MacsQuery {
            input_length,
            output_length,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.output_length == 0 || self.hop == 0 || self.sample_rate == 0 {
            return Err(Error::Config("query lengths, hop and sample rate must be positive".into()));
        }
        Ok(())
    }

    /// Seconds of audio covered by `output_length` frames.
    pub fn audio_seconds(&self) -> f64 {
        (self.output_length * self.hop) as f64 / self.sample_rate as f64
    }
}

/// Component names, in report order.
pub mod component {
    pub const ENCODER: &str = "encoder";
    pub const DECODER: &str = "decoder";
    pub const MEL_LINEAR: &str = "mel_linear";
    pub const DURATION: &str = "duration_predictor";
    pub const PITCH: &str = "pitch_predictor";
    pub const ENERGY: &str = "energy_predictor";
    pub const LENGTH_REGULATOR: &str = "length_regulator";
    pub const POSITIONAL: &str = "positional_encoding";
    pub const PITCH_EMBEDDING: &str = "pitch_embedding";
    pub const ENERGY_EMBEDDING: &str = "energy_embedding";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCost {
    pub name: String,
    /// Excluded from the core totals.
    pub auxiliary: bool,
    pub params: u64,
    pub macs: u64,
    /// Seconds of compute per second of audio, when profiled.
    pub rtf: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub params: u64,
    pub macs: u64,
    pub rtf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTotals {
    pub core: Totals,
    pub with_auxiliaries: Totals,
    /// Where the pitch and energy predictors were priced: "frame" or "phoneme".
    pub pitch_level: String,
    /// Core MACs with the pitch/energy predictors priced at the other level.
    pub macs_alternate_pitch_level: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileInfo {
    pub repetitions: usize,
    pub statistic: String,
    pub threads: usize,
    pub audio_seconds: f64,
}

/// Per-component parameters, MACs and (optionally) real-time factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub model: String,
    pub components: Vec<ComponentCost>,
    pub totals: CostTotals,
    pub query: Option<MacsQuery>,
    pub conventions: Vec<String>,
    pub profile: Option<ProfileInfo>,
}

impl CostBreakdown {
    pub fn component(&self, name: &str) -> Option<&ComponentCost> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn component_mut(&mut self, name: &str) -> Option<&mut ComponentCost> {
        self.components.iter_mut().find(|c| c.name == name)
    }

    /// Recompute totals from the components.
    pub fn refresh_totals(&mut self) {
        let sum = |aux: bool| {
            let parts = self.components.iter().filter(|c| aux || !c.auxiliary);
            let rtfs: Vec<f64> = parts.clone().filter_map(|c| c.rtf).collect();
            Totals {
                params: parts.clone().map(|c| c.params).sum(),
                macs: parts.map(|c| c.macs).sum(),
                rtf: (!rtfs.is_empty()).then(|| rtfs.iter().sum()),
            }
        };
        self.totals.core = sum(false);
        self.totals.with_auxiliaries = sum(true);
    }
}

pub fn conventions() -> Vec<String> {
    [
        "1 MAC = one multiply-accumulate; linear L×I→O costs L·I·O",
        "dense conv costs L·K·I·O, depthwise separable conv L·(K·I + I·O)",
        "self-attention costs 4·L·d² + 2·L²·d",
        "softmax, normalization, activations, bias adds and lookups cost 0 MACs",
        "encoder and duration predictor at input length; decoder and mel projection at output length",
        "core totals: encoder (incl. phoneme embedding), decoder, mel projection, variance predictors",
        "with-auxiliaries adds stored positional tables (max_positions+1 rows per side) and pitch/energy embeddings",
        "biases and layer norms counted when include_bias / include_layernorm are set",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

struct Pricing {
    components: Vec<ComponentCost>,
    alternate_macs: u64,
}

fn price(config: &ModelConfig, query: Option<&MacsQuery>) -> Result<Pricing> {
    config.validate()?;
    if let Some(q) = query {
        q.validate()?;
    }
    let (l_in, l_out) = query.map_or((0, 0), |q| (q.input_length as u64, q.output_length as u64));
    let (pitch_len, alt_pitch_len) = if config.pitch_at_phoneme_level {
        (l_in, l_out)
    } else {
        (l_out, l_in)
    };
    let d = config.hidden;
    let dims = config.slot_dims();
    let arch = &config.architecture;
    let part = |name: &str, auxiliary: bool, params: u64, macs: u64| ComponentCost {
        name: name.into(),
        auxiliary,
        params,
        macs,
        rtf: None,
    };

    let embedding = op_params(
        CostOp::Embedding {
            vocab: config.phoneme_vocab,
            width: d,
        },
        dims,
    );
    let mel = CostOp::Linear {
        input: d,
        output: config.mel_dim,
    };
    let mut components = vec![
        part(
            component::ENCODER,
            false,
            embedding + config.slots_params(&arch.encoder),
            config.slots_macs(&arch.encoder, l_in),
        ),
        part(
            component::DECODER,
            false,
            config.slots_params(&arch.decoder),
            config.slots_macs(&arch.decoder, l_out),
        ),
        part(component::MEL_LINEAR, false, op_params(mel, dims), op_macs(mel, dims, l_out)),
        part(
            component::DURATION,
            false,
            config.predictor_params(&config.duration_predictor),
            config.predictor_macs(&config.duration_predictor, l_in),
        ),
        part(
            component::PITCH,
            false,
            config.predictor_params(&config.pitch_predictor),
            config.predictor_macs(&config.pitch_predictor, pitch_len),
        ),
    ];
    let mut alternate_pitch = config.predictor_macs(&config.pitch_predictor, alt_pitch_len);
    if let Some(energy) = &config.energy_predictor {
        components.push(part(
            component::ENERGY,
            false,
            config.predictor_params(energy),
            config.predictor_macs(energy, pitch_len),
        ));
        alternate_pitch += config.predictor_macs(energy, alt_pitch_len);
    }
    components.push(part(component::LENGTH_REGULATOR, false, 0, 0));
    components.push(part(
        component::POSITIONAL,
        true,
        2 * ((config.max_positions + 1) * d) as u64,
        0,
    ));
    let bins = CostOp::Embedding {
        vocab: config.pitch_bins,
        width: d,
    };
    components.push(part(component::PITCH_EMBEDDING, true, op_params(bins, dims), 0));
    if config.energy_predictor.is_some() {
        components.push(part(component::ENERGY_EMBEDDING, true, op_params(bins, dims), 0));
    }

    let variance_now: u64 = components
        .iter()
        .filter(|c| c.name == component::PITCH || c.name == component::ENERGY)
        .map(|c| c.macs)
        .sum();
    let core_macs: u64 = components.iter().filter(|c| !c.auxiliary).map(|c| c.macs).sum();
    Ok(Pricing {
        alternate_macs: core_macs - variance_now + alternate_pitch,
        components,
    })
}

fn breakdown(config: &ModelConfig, query: Option<MacsQuery>, pricing: Pricing) -> CostBreakdown {
    let mut report = CostBreakdown {
        model: config.name.clone(),
        components: pricing.components,
        totals: CostTotals {
            core: Totals::default(),
            with_auxiliaries: Totals::default(),
            pitch_level: if config.pitch_at_phoneme_level { "phoneme" } else { "frame" }.into(),
            macs_alternate_pitch_level: pricing.alternate_macs,
        },
        query,
        conventions: conventions(),
        profile: None,
    };
    report.refresh_totals();
    report
}

/// Parameter counts per component (MAC fields are zero).
pub fn model_params(config: &ModelConfig) -> Result<CostBreakdown> {
    let pricing = price(config, None)?;
    Ok(breakdown(config, None, pricing))
}

/// Parameter and MAC counts per component for the given lengths.
pub fn model_macs(config: &ModelConfig, query: &MacsQuery) -> Result<CostBreakdown> {
    let pricing = price(config, Some(query))?;
    Ok(breakdown(config, Some(*query), pricing))
}
