//! Instantiated text-to-speech network for brute-force counting and profiling.

use alloc::format;
use alloc::vec::Vec;

use crate::costmodel::{component, ConvKind, ModelConfig, PredictorSpec};
use crate::error::{Error, Result};
use crate::kernels::{
    length_regulate, Conv1d, Embedding, Kernel, LayerNorm, Linear, MacCounter, OpInstance, SepConv, Tensor,
    WeightInit,
};
use crate::searchspace::OpCode;

/// Sinusoidal position table, `rows × width`.
pub fn sinusoid_table(rows: usize, width: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, width]);
    for pos in 0..rows {
        for i in 0..width {
            let rate = libm::pow(10000.0, (2 * (i / 2)) as f64 / width as f64);
            let angle = pos as f64 / rate;
            t.data_mut()[pos * width + i] = if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) };
        }
    }
    t
}

fn relu(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Pre-norm residual slot: `x + op(norm(x))`.
#[derive(Debug, Clone)]
pub struct Slot {
    pub norm: Option<LayerNorm>,
    pub op: OpInstance,
}

impl Slot {
    fn new(code: OpCode, config: &ModelConfig, init: &WeightInit, prefix: &str) -> Result<Self> {
        Ok(Slot {
            norm: config.include_layernorm.then(|| LayerNorm::new(config.hidden)),
            op: OpInstance::for_code(code, config.slot_dims(), init, prefix)?,
        })
    }

    pub fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<Tensor> {
        let mut y = match &self.norm {
            Some(norm) => self.op.apply(&norm.forward(x, macs)?.0, macs)?,
            None => self.op.apply(x, macs)?,
        };
        y.add_assign(x)?;
        Ok(y)
    }

    pub fn param_count(&self) -> usize {
        self.op.param_count() + self.norm.as_ref().map_or(0, |n| n.param_count())
    }
}

/// Convolutional stack regressing one scalar per position.
#[derive(Debug, Clone)]
pub struct VariancePredictor {
    pub layers: Vec<(OpInstance, Option<LayerNorm>)>,
    pub out: Linear,
}

impl VariancePredictor {
    fn new(spec: &PredictorSpec, config: &ModelConfig, init: &WeightInit, prefix: &str) -> Result<Self> {
        let bias = config.include_bias;
        let layers = (0..spec.layers)
            .map(|l| {
                let input = if l == 0 { config.hidden } else { spec.filter };
                let name = format!("{prefix}.layer{l}");
                let conv = match spec.conv {
                    ConvKind::Vanilla => {
                        OpInstance::Conv1d(Conv1d::new(spec.kernel, input, spec.filter, bias, init, &name)?)
                    }
                    ConvKind::Sepconv => {
                        OpInstance::SepConv(SepConv::new(spec.kernel, input, spec.filter, bias, init, &name)?)
                    }
                };
                Ok((conv, config.include_layernorm.then(|| LayerNorm::new(spec.filter))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VariancePredictor {
            layers,
            out: Linear::new(spec.filter, 1, bias, init, &format!("{prefix}.out")),
        })
    }

    /// `rows × 1` predictions.
    pub fn forward(&self, x: &Tensor, macs: &mut MacCounter) -> Result<Tensor> {
        let mut h = x.clone();
        for (conv, norm) in &self.layers {
            h = conv.apply(&h, macs)?;
            relu(&mut h);
            if let Some(norm) = norm {
                h = norm.forward(&h, macs)?.0;
            }
        }
        Ok(self.out.forward(&h, macs)?.0)
    }

    pub fn param_count(&self) -> usize {
        let layers: usize = self
            .layers
            .iter()
            .map(|(c, n)| c.param_count() + n.as_ref().map_or(0, |n| n.param_count()))
            .sum();
        layers + self.out.param_count()
    }
}

/// Forward stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Encoder,
    DurationPredictor,
    PitchPredictor,
    EnergyPredictor,
    LengthRegulator,
    Decoder,
    MelLinear,
}

impl Stage {
    pub fn component(self) -> &'static str {
        match self {
            Stage::Encoder => component::ENCODER,
            Stage::DurationPredictor => component::DURATION,
            Stage::PitchPredictor => component::PITCH,
            Stage::EnergyPredictor => component::ENERGY,
            Stage::LengthRegulator => component::LENGTH_REGULATOR,
            Stage::Decoder => component::DECODER,
            Stage::MelLinear => component::MEL_LINEAR,
        }
    }
}

/// Intermediate activations threaded through [`TtsModel::run_stage`].
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub tokens: Vec<usize>,
    pub durations: Vec<usize>,
    pub hidden: Tensor,
    pub log_durations: Option<Tensor>,
}

impl ForwardState {
    pub fn new(tokens: Vec<usize>, durations: Vec<usize>) -> Self {
        ForwardState {
            tokens,
            durations,
            hidden: Tensor::zeros(&[0, 0]),
            log_durations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TtsModel {
    pub config: ModelConfig,
    pub phonemes: Embedding,
    pub positions: [Tensor; 2],
    pub encoder: Vec<Slot>,
    pub decoder: Vec<Slot>,
    pub mel: Linear,
    pub duration: VariancePredictor,
    pub pitch: VariancePredictor,
    pub energy: Option<VariancePredictor>,
    pub pitch_embedding: Embedding,
    pub energy_embedding: Option<Embedding>,
}

impl TtsModel {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let init = WeightInit::new(seed);
        let d = config.hidden;
        let slots = |ops: &[OpCode], side: &str| -> Result<Vec<Slot>> {
            ops.iter()
                .enumerate()
                .map(|(i, &op)| Slot::new(op, config, &init, &format!("{side}.{i}")))
                .collect()
        };
        let table = sinusoid_table(config.max_positions + 1, d);
        Ok(TtsModel {
            phonemes: Embedding::new(config.phoneme_vocab, d, &init, "phonemes"),
            positions: [table.clone(), table],
            encoder: slots(&config.architecture.encoder, "encoder")?,
            decoder: slots(&config.architecture.decoder, "decoder")?,
            mel: Linear::new(d, config.mel_dim, config.include_bias, &init, "mel"),
            duration: VariancePredictor::new(&config.duration_predictor, config, &init, "duration")?,
            pitch: VariancePredictor::new(&config.pitch_predictor, config, &init, "pitch")?,
            energy: config
                .energy_predictor
                .as_ref()
                .map(|p| VariancePredictor::new(p, config, &init, "energy"))
                .transpose()?,
            pitch_embedding: Embedding::new(config.pitch_bins, d, &init, "pitch_embedding"),
            energy_embedding: config
                .energy_predictor
                .is_some()
                .then(|| Embedding::new(config.pitch_bins, d, &init, "energy_embedding")),
            config: config.clone(),
        })
    }

    /// Tensor element counts per component, labelled like the analytical report.
    pub fn component_params(&self) -> Vec<(&'static str, u64)> {
        let slots = |s: &[Slot]| s.iter().map(Slot::param_count).sum::<usize>() as u64;
        let mut out = alloc::vec![
            (component::ENCODER, (self.phonemes.table.len() as u64) + slots(&self.encoder)),
            (component::DECODER, slots(&self.decoder)),
            (component::MEL_LINEAR, self.mel.param_count() as u64),
            (component::DURATION, self.duration.param_count() as u64),
            (component::PITCH, self.pitch.param_count() as u64),
        ];
        if let Some(e) = &self.energy {
            out.push((component::ENERGY, e.param_count() as u64));
        }
        out.push((component::LENGTH_REGULATOR, 0));
        out.push((
            component::POSITIONAL,
            self.positions.iter().map(|t| t.len() as u64).sum(),
        ));
        out.push((component::PITCH_EMBEDDING, self.pitch_embedding.table.len() as u64));
        if let Some(e) = &self.energy_embedding {
            out.push((component::ENERGY_EMBEDDING, e.table.len() as u64));
        }
        out
    }

    pub fn stages(&self) -> Vec<Stage> {
        let mut stages = alloc::vec![Stage::Encoder, Stage::DurationPredictor];
        let variance = core::iter::once(Stage::PitchPredictor)
            .chain(self.energy.as_ref().map(|_| Stage::EnergyPredictor));
        if self.config.pitch_at_phoneme_level {
            stages.extend(variance);
            stages.push(Stage::LengthRegulator);
        } else {
            stages.push(Stage::LengthRegulator);
            stages.extend(variance);
        }
        stages.extend([Stage::Decoder, Stage::MelLinear]);
        stages
    }

    fn add_positions(&self, side: usize, h: &mut Tensor) -> Result<()> {
        let (rows, d) = h.dims2()?;
        let table = &self.positions[side];
        if rows > table.shape()[0] {
            return Err(Error::Shape(format!(
                "sequence of {rows} exceeds {} stored positions",
                table.shape()[0]
            )));
        }
        h.data_mut()
            .iter_mut()
            .zip(&table.data()[..rows * d])
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn add_variance(
        &self,
        predictor: &VariancePredictor,
        embedding: &Embedding,
        h: &mut Tensor,
        macs: &mut MacCounter,
    ) -> Result<()> {
        let p = predictor.forward(h, macs)?;
        let bins = embedding.vocab();
        let buckets: Vec<usize> = p
            .data()
            .iter()
            .map(|&v| {
                let unit = 0.5 * (libm::tanh(v) + 1.0);
                ((unit * bins as f64) as usize).min(bins - 1)
            })
            .collect();
        h.add_assign(&embedding.forward(&buckets)?)
    }

    pub fn run_stage(&self, stage: Stage, state: &mut ForwardState, macs: &mut MacCounter) -> Result<()> {
        match stage {
            Stage::Encoder => {
                let mut h = self.phonemes.forward(&state.tokens)?;
                self.add_positions(0, &mut h)?;
                for slot in &self.encoder {
                    h = slot.forward(&h, macs)?;
                }
                state.hidden = h;
            }
            Stage::DurationPredictor => {
                state.log_durations = Some(self.duration.forward(&state.hidden, macs)?);
            }
            Stage::PitchPredictor => {
                let mut h = core::mem::replace(&mut state.hidden, Tensor::zeros(&[0, 0]));
                self.add_variance(&self.pitch, &self.pitch_embedding, &mut h, macs)?;
                state.hidden = h;
            }
            Stage::EnergyPredictor => {
                if let (Some(p), Some(e)) = (&self.energy, &self.energy_embedding) {
                    let mut h = core::mem::replace(&mut state.hidden, Tensor::zeros(&[0, 0]));
                    self.add_variance(p, e, &mut h, macs)?;
                    state.hidden = h;
                }
            }
            Stage::LengthRegulator => {
                state.hidden = length_regulate(&state.hidden, &state.durations)?;
            }
            Stage::Decoder => {
                let mut h = core::mem::replace(&mut state.hidden, Tensor::zeros(&[0, 0]));
                self.add_positions(1, &mut h)?;
                for slot in &self.decoder {
                    h = slot.forward(&h, macs)?;
                }
                state.hidden = h;
            }
            Stage::MelLinear => {
                state.hidden = self.mel.forward(&state.hidden, macs)?.0;
            }
        }
        Ok(())
    }

    /// Full inference pass with given durations; returns the mel frames and
    /// the MACs spent in each stage.
    pub fn forward(&self, tokens: &[usize], durations: &[usize]) -> Result<(Tensor, Vec<(Stage, u64)>)> {
        let mut state = ForwardState::new(tokens.into(), durations.into());
        let mut per_stage = Vec::new();
        for stage in self.stages() {
            let mut macs = MacCounter::new();
            self.run_stage(stage, &mut state, &mut macs)?;
            per_stage.push((stage, macs.get()));
        }
        Ok((state.hidden, per_stage))
    }
}

/// Deterministic inputs for a forward pass: token ids and durations that
/// spread `output_length` frames as evenly as possible.
pub fn synthetic_inputs(vocab: usize, input_length: usize, output_length: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if input_length == 0 || output_length < input_length {
        return Err(Error::Config(format!(
            "need 0 < input_length ≤ output_length, got {input_length} and {output_length}"
        )));
    }
    let tokens = (0..input_length).map(|i| (i * 7 + 3) % vocab).collect();
    let base = output_length / input_length;
    let extra = output_length % input_length;
    let durations = (0..input_length).map(|i| base + usize::from(i < extra)).collect();
    Ok((tokens, durations))
}
