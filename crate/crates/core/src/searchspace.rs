//! The encoder/decoder operation search space.
//!
//! Each slot of the encoder and decoder chain holds exactly one operation
//! drawn from a shared vocabulary. The default space has 4 + 4 slots and 11
//! operations: multi-head self-attention with 2, 4 or 8 heads, depthwise
//! separable convolution with 7 kernel sizes, and the feed-forward block.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::RngExt;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

pub const ATTENTION_HEADS: [u8; 3] = [2, 4, 8];
pub const SEPCONV_KERNELS: [u8; 7] = [1, 5, 9, 13, 17, 21, 25];

/// One candidate operation for a slot.
///
/// The derived ordering matches the canonical vocabulary order (attention by
/// ascending heads, convolutions by ascending kernel, feed-forward last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpCode {
    Mhsa { heads: u8 },
    SepConv { kernel: u8 },
    Ffn,
}

pub const VOCABULARY: [OpCode; 11] = [
    OpCode::Mhsa { heads: 2 },
    OpCode::Mhsa { heads: 4 },
    OpCode::Mhsa { heads: 8 },
    OpCode::SepConv { kernel: 1 },
    OpCode::SepConv { kernel: 5 },
    OpCode::SepConv { kernel: 9 },
    OpCode::SepConv { kernel: 13 },
    OpCode::SepConv { kernel: 17 },
    OpCode::SepConv { kernel: 21 },
    OpCode::SepConv { kernel: 25 },
    OpCode::Ffn,
];

impl OpCode {
    pub fn mhsa(heads: u8) -> Result<Self> {
        if ATTENTION_HEADS.contains(&heads) {
            Ok(OpCode::Mhsa { heads })
        } else {
            Err(Error::InvalidOp(format!("attention heads {heads} not in {ATTENTION_HEADS:?}")))
        }
    }

    pub fn sepconv(kernel: u8) -> Result<Self> {
        if SEPCONV_KERNELS.contains(&kernel) {
            Ok(OpCode::SepConv { kernel })
        } else {
            Err(Error::InvalidOp(format!("kernel size {kernel} not in {SEPCONV_KERNELS:?}")))
        }
    }

    /// Whether this value is one of the 11 legal operations.
    pub fn is_legal(self) -> bool {
        VOCABULARY.contains(&self)
    }

    /// Attention heads must divide the hidden size.
    pub fn check_hidden(self, hidden: usize) -> Result<()> {
        match self {
            OpCode::Mhsa { heads } if heads == 0 || !hidden.is_multiple_of(heads as usize) => Err(
                Error::Config(format!("{heads} attention heads do not divide hidden size {hidden}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn token(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpCode::Mhsa { heads } => write!(f, "mhsa{heads}"),
            OpCode::SepConv { kernel } => write!(f, "sep{kernel}"),
            OpCode::Ffn => f.write_str("ffn"),
        }
    }
}

impl FromStr for OpCode {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, String> {
        let parse_param = |digits: &str| -> core::result::Result<u8, String> {
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(format!("unknown operation `{s}`"));
            }
            digits.parse::<u8>().map_err(|_| format!("parameter out of range in `{s}`"))
        };
        if s == "ffn" {
            Ok(OpCode::Ffn)
        } else if let Some(rest) = s.strip_prefix("mhsa") {
            OpCode::mhsa(parse_param(rest)?).map_err(|_| format!("{rest} attention heads not in vocabulary"))
        } else if let Some(rest) = s.strip_prefix("sep") {
            OpCode::sepconv(parse_param(rest)?).map_err(|_| format!("kernel {rest} not in vocabulary"))
        } else {
            Err(format!("unknown operation `{s}`"))
        }
    }
}

impl Serialize for OpCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OpCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The canonical 11-operation vocabulary.
pub fn op_vocabulary() -> Vec<OpCode> {
    VOCABULARY.to_vec()
}

/// Slot counts and the (shared) vocabulary of a search space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawSpaceDef")]
pub struct SpaceDef {
    pub encoder_slots: usize,
    pub decoder_slots: usize,
    pub vocabulary: Vec<OpCode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpaceDef {
    encoder_slots: usize,
    decoder_slots: usize,
    vocabulary: Vec<OpCode>,
}

impl TryFrom<RawSpaceDef> for SpaceDef {
    type Error = Error;

    fn try_from(raw: RawSpaceDef) -> Result<Self> {
        SpaceDef::new(raw.encoder_slots, raw.decoder_slots, raw.vocabulary)
    }
}

impl Default for SpaceDef {
    fn default() -> Self {
        SpaceDef {
            encoder_slots: 4,
            decoder_slots: 4,
            vocabulary: op_vocabulary(),
        }
    }
}

impl SpaceDef {
    pub fn new(encoder_slots: usize, decoder_slots: usize, vocabulary: Vec<OpCode>) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::InvalidSpace("vocabulary is empty".into()));
        }
        let distinct: BTreeSet<_> = vocabulary.iter().collect();
        if distinct.len() != vocabulary.len() {
            return Err(Error::InvalidSpace("vocabulary has duplicate operations".into()));
        }
        if let Some(op) = vocabulary.iter().find(|op| !op.is_legal()) {
            return Err(Error::InvalidSpace(format!("illegal operation {op:?}")));
        }
        Ok(SpaceDef {
            encoder_slots,
            decoder_slots,
            vocabulary,
        })
    }

    pub fn slots(&self) -> usize {
        self.encoder_slots + self.decoder_slots
    }

    pub fn index_of(&self, op: OpCode) -> Option<usize> {
        self.vocabulary.iter().position(|&v| v == op)
    }

    /// Length of the one-hot feature vector.
    pub fn feature_len(&self) -> usize {
        self.slots() * self.vocabulary.len()
    }
}

/// One genotype: an operation per encoder slot and per decoder slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture {
    pub encoder: Vec<OpCode>,
    pub decoder: Vec<OpCode>,
}

impl Architecture {
    pub fn new(encoder: Vec<OpCode>, decoder: Vec<OpCode>) -> Self {
        Architecture { encoder, decoder }
    }

    /// The genotype reported as the final searched model.
    pub fn discovered() -> Self {
        let sep = |kernel| OpCode::SepConv { kernel };
        Architecture {
            encoder: alloc::vec![sep(5), sep(25), sep(13), sep(9)],
            decoder: alloc::vec![sep(17), sep(21), sep(9), sep(13)],
        }
    }

    /// Every slot in chain order, encoder first.
    pub fn ops(&self) -> impl Iterator<Item = OpCode> + '_ {
        self.encoder.iter().chain(self.decoder.iter()).copied()
    }

    pub fn validate(&self, space: &SpaceDef) -> Result<()> {
        if self.encoder.len() != space.encoder_slots || self.decoder.len() != space.decoder_slots {
            return Err(Error::InvalidOp(format!(
                "architecture has {}+{} slots, space expects {}+{}",
                self.encoder.len(),
                self.decoder.len(),
                space.encoder_slots,
                space.decoder_slots
            )));
        }
        match self.ops().find(|op| space.index_of(*op).is_none()) {
            Some(op) => Err(Error::InvalidOp(format!("{op} is not in the space vocabulary"))),
            None => Ok(()),
        }
    }

    /// Parse the codec form, accepting any slot count and any legal token.
    pub fn parse_any(text: &str) -> Result<Self> {
        parse_with(text, None, |_| true)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, ops: &[OpCode]| -> fmt::Result {
            for (i, op) in ops.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{op}")?;
            }
            Ok(())
        };
        f.write_str("enc:[")?;
        list(f, &self.encoder)?;
        f.write_str("];dec:[")?;
        list(f, &self.decoder)?;
        f.write_str("]")
    }
}

impl Serialize for Architecture {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Architecture::parse_any(&s).map_err(serde::de::Error::custom)
    }
}

pub fn format_arch(arch: &Architecture) -> String {
    arch.to_string()
}

/// Parse `enc:[op,...];dec:[op,...]`, checking arity and vocabulary against `space`.
pub fn parse_arch(text: &str, space: &SpaceDef) -> Result<Architecture> {
    parse_with(
        text,
        Some((space.encoder_slots, space.decoder_slots)),
        |op| space.index_of(op).is_some(),
    )
}

fn parse_error(token: &str, position: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        token: token.into(),
        position,
        reason: reason.into(),
    }
}

fn parse_with(
    text: &str,
    arity: Option<(usize, usize)>,
    allowed: impl Fn(OpCode) -> bool,
) -> Result<Architecture> {
    let mut pos = 0;
    let mut sections = [Vec::new(), Vec::new()];
    for (which, prefix) in ["enc:[", "dec:["].into_iter().enumerate() {
        if which == 1 {
            if !text[pos..].starts_with(';') {
                return Err(parse_error(&text[pos..], pos, "expected `;` between sections"));
            }
            pos += 1;
        }
        if !text[pos..].starts_with(prefix) {
            return Err(parse_error(&text[pos..], pos, format!("expected `{prefix}`")));
        }
        pos += prefix.len();
        let list_start = pos;
        let close = text[pos..]
            .find(']')
            .ok_or_else(|| parse_error(&text[pos..], pos, "missing `]`"))?;
        let body = &text[pos..pos + close];
        let ops = &mut sections[which];
        if !body.is_empty() {
            let mut tok_pos = pos;
            for tok in body.split(',') {
                let op: OpCode = tok.parse().map_err(|reason| parse_error(tok, tok_pos, reason))?;
                if !allowed(op) {
                    return Err(parse_error(tok, tok_pos, "operation not in the space vocabulary"));
                }
                ops.push(op);
                tok_pos += tok.len() + 1;
            }
        }
        if let Some(expected) = arity.map(|(e, d)| if which == 0 { e } else { d }) {
            if ops.len() != expected {
                let name = if which == 0 { "encoder" } else { "decoder" };
                return Err(parse_error(
                    body,
                    list_start,
                    format!("{name} expects {expected} operations, found {}", ops.len()),
                ));
            }
        }
        pos += close + 1;
    }
    if pos != text.len() {
        return Err(parse_error(&text[pos..], pos, "trailing characters"));
    }
    let [encoder, decoder] = sections;
    Ok(Architecture { encoder, decoder })
}

/// Number of distinct architectures, `|vocabulary|^(slots)`.
pub fn space_size(space: &SpaceDef) -> Result<u64> {
    let base = space.vocabulary.len() as u64;
    let exponent = u32::try_from(space.slots()).map_err(|_| Error::Overflow {
        base,
        exponent: u32::MAX,
    })?;
    base.checked_pow(exponent).ok_or(Error::Overflow { base, exponent })
}

/// `n` architectures drawn i.i.d. uniformly from the space.
pub fn sample_uniform(space: &SpaceDef, seed: u64, n: usize) -> Vec<Architecture> {
    let mut rng = rng::stream(seed, "sample_uniform");
    let v = space.vocabulary.len();
    let mut draw = |count: usize| -> Vec<OpCode> {
        (0..count).map(|_| space.vocabulary[rng.random_range(0..v)]).collect()
    };
    (0..n)
        .map(|_| {
            let encoder = draw(space.encoder_slots);
            let decoder = draw(space.decoder_slots);
            Architecture { encoder, decoder }
        })
        .collect()
}

/// Feature map used as predictor input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// `slots × |vocabulary|` binary indicators.
    #[default]
    OneHot,
    /// Two numbers per slot: operation family (0 attention, 1 conv, 2 ffn)
    /// and its parameter (heads or kernel size, 0 for ffn).
    Ordinal,
}

impl FeatureEncoding {
    pub fn len(self, space: &SpaceDef) -> usize {
        match self {
            FeatureEncoding::OneHot => space.feature_len(),
            FeatureEncoding::Ordinal => 2 * space.slots(),
        }
    }

    pub fn encode(self, arch: &Architecture, space: &SpaceDef) -> Result<Vec<f64>> {
        match self {
            FeatureEncoding::OneHot => encode_onehot(arch, space),
            FeatureEncoding::Ordinal => {
                arch.validate(space)?;
                let mut out = Vec::with_capacity(2 * space.slots());
                for op in arch.ops() {
                    let (family, param) = match op {
                        OpCode::Mhsa { heads } => (0.0, f64::from(heads)),
                        OpCode::SepConv { kernel } => (1.0, f64::from(kernel)),
                        OpCode::Ffn => (2.0, 0.0),
                    };
                    out.push(family);
                    out.push(param);
                }
                Ok(out)
            }
        }
    }
}

/// One-hot encoding: slot `p` holding vocabulary entry `i` sets component `p·|V| + i`.
pub fn encode_onehot(arch: &Architecture, space: &SpaceDef) -> Result<Vec<f64>> {
    if arch.encoder.len() != space.encoder_slots || arch.decoder.len() != space.decoder_slots {
        return Err(Error::InvalidOp(format!("{arch} does not match the space slot counts")));
    }
    let v = space.vocabulary.len();
    let mut out = alloc::vec![0.0; space.feature_len()];
    for (slot, op) in arch.ops().enumerate() {
        let i = space
            .index_of(op)
            .ok_or_else(|| Error::InvalidOp(format!("{op} is not in the space vocabulary")))?;
        out[slot * v + i] = 1.0;
    }
    Ok(out)
}

/// Lexicographic rank of an architecture (first encoder slot most significant).
pub fn arch_index(arch: &Architecture, space: &SpaceDef) -> Result<u64> {
    arch.validate(space)?;
    let v = space.vocabulary.len() as u64;
    let mut idx = 0u64;
    for op in arch.ops() {
        let i = space.index_of(op).expect("validated") as u64;
        idx = idx
            .checked_mul(v)
            .and_then(|x| x.checked_add(i))
            .ok_or(Error::Overflow {
                base: v,
                exponent: space.slots() as u32,
            })?;
    }
    Ok(idx)
}

/// Inverse of [`arch_index`]. The caller guarantees `index < space_size(space)`.
pub fn arch_at(space: &SpaceDef, mut index: u64) -> Architecture {
    let v = space.vocabulary.len() as u64;
    let mut ops = alloc::vec![space.vocabulary[0]; space.slots()];
    for slot in (0..ops.len()).rev() {
        ops[slot] = space.vocabulary[(index % v) as usize];
        index /= v;
    }
    let decoder = ops.split_off(space.encoder_slots);
    Architecture { encoder: ops, decoder }
}

/// Page `[offset, offset + limit)` of the lexicographic enumeration.
pub fn enumerate(space: &SpaceDef, offset: u64, limit: u64) -> Result<Vec<Architecture>> {
    let size = space_size(space)?;
    match offset.checked_add(limit) {
        Some(end) if end <= size => Ok((offset..end).map(|i| arch_at(space, i)).collect()),
        _ => Err(Error::OutOfRange { offset, limit, size }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use std::collections::HashSet;

    fn tiny(slots: (usize, usize), ops: usize) -> SpaceDef {
        SpaceDef::new(slots.0, slots.1, VOCABULARY[..ops].to_vec()).unwrap()
    }

    #[test]
    fn vocabulary_shape() {
        let v = op_vocabulary();
        assert_eq!(v.len(), 11);
        assert_eq!(v[9], OpCode::SepConv { kernel: 25 });
        assert_eq!(v.iter().filter(|op| matches!(op, OpCode::Mhsa { .. })).count(), 3);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, v);
    }

    #[test]
    fn sizes() {
        assert_eq!(space_size(&SpaceDef::default()).unwrap(), 214_358_881);
        assert_eq!(space_size(&tiny((1, 0), 1)).unwrap(), 1);
        assert_eq!(space_size(&tiny((1, 1), 3)).unwrap(), 9);
        assert!(matches!(space_size(&tiny((10, 10), 11)), Err(Error::Overflow { .. })));
    }

    #[test]
    fn space_size_matches_enumeration() {
        for (slots, ops) in [((1, 1), 3), ((2, 2), 3), ((2, 1), 11), ((0, 3), 5)] {
            let space = tiny(slots, ops);
            let size = space_size(&space).unwrap();
            let all = enumerate(&space, 0, size).unwrap();
            let distinct: HashSet<_> = all.iter().cloned().collect();
            assert_eq!(distinct.len() as u64, size);
            let mut sorted = all.clone();
            sorted.sort_by_key(|a| arch_index(a, &space).unwrap());
            assert_eq!(sorted, all);
        }
    }

    #[test]
    fn enumeration_order_and_bounds() {
        let space = tiny((1, 1), 3);
        let all = enumerate(&space, 0, 9).unwrap();
        assert_eq!(all.len(), 9);
        assert!(all[0].ops().all(|op| op == space.vocabulary[0]));
        assert_eq!(all[1].decoder[0], space.vocabulary[1]);
        assert_eq!(all[3].encoder[0], space.vocabulary[1]);
        assert!(matches!(enumerate(&space, 5, 5), Err(Error::OutOfRange { .. })));
        assert!(enumerate(&space, u64::MAX, 2).is_err());
        let last = enumerate(&SpaceDef::default(), 214_358_880, 1).unwrap();
        assert!(last[0].ops().all(|op| op == OpCode::Ffn));
    }

    #[test]
    fn index_roundtrip() {
        let space = SpaceDef::default();
        for arch in sample_uniform(&space, 3, 200) {
            let i = arch_index(&arch, &space).unwrap();
            assert_eq!(arch_at(&space, i), arch);
        }
    }

    #[test]
    fn onehot_examples() {
        let space = SpaceDef::default();
        let ffn = Architecture::new(vec![OpCode::Ffn; 4], vec![OpCode::Ffn; 4]);
        let hot = |f: Vec<f64>| -> Vec<usize> {
            f.iter().enumerate().filter(|(_, &x)| x == 1.0).map(|(i, _)| i).collect()
        };
        let f = encode_onehot(&ffn, &space).unwrap();
        assert_eq!(f.len(), 88);
        assert_eq!(hot(f), vec![10, 21, 32, 43, 54, 65, 76, 87]);
        let f = encode_onehot(&Architecture::discovered(), &space).unwrap();
        assert_eq!(hot(f), vec![4, 20, 28, 38, 51, 63, 71, 83]);

        let narrow = tiny((4, 4), 3);
        assert!(encode_onehot(&ffn, &narrow).is_err());
    }

    #[test]
    fn onehot_injective_on_tiny_space() {
        let space = tiny((2, 2), 3);
        let all = enumerate(&space, 0, 81).unwrap();
        let codes: HashSet<Vec<u64>> = all
            .iter()
            .map(|a| encode_onehot(a, &space).unwrap().iter().map(|x| x.to_bits()).collect())
            .collect();
        assert_eq!(codes.len(), 81);
    }

    #[test]
    fn codec() {
        let space = SpaceDef::default();
        let text = "enc:[sep5,sep25,sep13,sep9];dec:[sep17,sep21,sep9,sep13]";
        let arch = parse_arch(text, &space).unwrap();
        assert_eq!(arch, Architecture::discovered());
        assert_eq!(format_arch(&arch), text);

        match parse_arch("enc:[sep3,sep5,sep5,sep5];dec:[ffn,ffn,ffn,ffn]", &space) {
            Err(Error::Parse { token, position, .. }) => {
                assert_eq!(token, "sep3");
                assert_eq!(position, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_arch("enc:[sep5,ffn,ffn,ffn];dec:[ffn,mhsa8,ffn,gru]", &space) {
            Err(Error::Parse { token, position, .. }) => {
                assert_eq!(token, "gru");
                assert_eq!(position, 42);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_arch("enc:[ffn,ffn,ffn];dec:[ffn,ffn,ffn,ffn]", &space),
            Err(Error::Parse { .. })
        ));
        assert!(parse_arch("enc:[ffn,ffn,ffn,ffn];dec:[ffn,ffn,ffn,ffn]x", &space).is_err());
        assert!(parse_arch("enc:[ffn,ffn,ffn,ffn]dec:[ffn,ffn,ffn,ffn]", &space).is_err());
        assert!(parse_arch("enc:[ffn,,ffn,ffn];dec:[ffn,ffn,ffn,ffn]", &space).is_err());
        assert!(parse_arch("enc:[mhsa16,ffn,ffn,ffn];dec:[ffn,ffn,ffn,ffn]", &space).is_err());

        let narrow = tiny((4, 4), 3);
        assert!(parse_arch("enc:[ffn,ffn,ffn,ffn];dec:[ffn,ffn,ffn,ffn]", &narrow).is_err());
        let free = Architecture::parse_any("enc:[mhsa2,ffn];dec:[]").unwrap();
        assert_eq!(free.encoder.len(), 2);
        assert!(free.decoder.is_empty());
    }

    #[test]
    fn single_point_space_sampling() {
        let space = tiny((4, 4), 1);
        let samples = sample_uniform(&space, 99, 5);
        assert_eq!(samples.len(), 5);
        assert!(samples.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sampling_is_deterministic() {
        let space = SpaceDef::default();
        assert_eq!(sample_uniform(&space, 11, 50), sample_uniform(&space, 11, 50));
        assert_ne!(sample_uniform(&space, 11, 50), sample_uniform(&space, 12, 50));
    }

    #[test]
    fn sampling_frequencies_within_three_sigma() {
        let space = SpaceDef::default();
        let n = 11_000;
        let samples = sample_uniform(&space, 2024, n);
        let p = 1.0 / 11.0;
        let sigma = libm::sqrt(p * (1.0 - p) / n as f64);
        for slot in 0..8 {
            for op in &space.vocabulary {
                let count = samples.iter().filter(|a| a.ops().nth(slot) == Some(*op)).count();
                let freq = count as f64 / n as f64;
                assert!((freq - p).abs() <= 3.0 * sigma, "slot {slot} {op}: {freq}");
            }
        }
    }

    #[test]
    fn heads_must_divide_hidden() {
        assert!(OpCode::Mhsa { heads: 8 }.check_hidden(256).is_ok());
        assert!(OpCode::Mhsa { heads: 8 }.check_hidden(20).is_err());
        assert!(OpCode::SepConv { kernel: 25 }.check_hidden(3).is_ok());
    }

    #[test]
    fn space_validation() {
        assert!(SpaceDef::new(1, 1, vec![]).is_err());
        assert!(SpaceDef::new(1, 1, vec![OpCode::Ffn, OpCode::Ffn]).is_err());
        assert!(SpaceDef::new(1, 1, vec![OpCode::SepConv { kernel: 3 }]).is_err());
    }

    #[test]
    fn ordinal_features() {
        let space = SpaceDef::default();
        let f = FeatureEncoding::Ordinal.encode(&Architecture::discovered(), &space).unwrap();
        assert_eq!(f.len(), 16);
        assert_eq!(&f[..4], &[1.0, 5.0, 1.0, 25.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn samples_are_valid(seed in any::<u64>()) {
                let space = SpaceDef::default();
                for arch in sample_uniform(&space, seed, 10_000 / 16) {
                    prop_assert!(arch.validate(&space).is_ok());
                    let f = encode_onehot(&arch, &space).unwrap();
                    prop_assert_eq!(f.iter().sum::<f64>(), 8.0);
                }
            }

            #[test]
            fn codec_roundtrip(index in 0u64..214_358_881) {
                let space = SpaceDef::default();
                let arch = arch_at(&space, index);
                let text = format_arch(&arch);
                prop_assert_eq!(parse_arch(&text, &space).unwrap(), arch);
            }
        }
    }
}
