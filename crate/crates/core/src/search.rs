//! Predictor-guided architecture search and the random-search baseline.
//!
//! GBDT-NAS phases: train the supernet, label `n_initial` distinct uniform
//! samples, fit a GBDT on their encodings, predict over the pool, re-evaluate
//! the `top_k` predicted-best candidates, and return the best re-evaluated one.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::costmodel::{model_macs, CostBreakdown, MacsQuery, ModelConfig};
use crate::error::{Error, Result};
use crate::gbdt::{fit, GbdtConfig, GbdtModel, TopK};
use crate::rng;
use crate::searchspace::{arch_at, arch_index, space_size, Architecture, FeatureEncoding, SpaceDef};
use crate::supernet::{
    make_synth_dataset, train_supernet, EvalRecord, SplitSizes, SupernetState, SynthDataset, ToyDims, TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionPool {
    /// Every architecture in the space.
    Full,
    /// This many fresh uniform samples, distinct and not already labelled.
    Sampled(u64),
}

/// Synthetic task settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub dims: ToyDims,
    pub sizes: SplitSizes,
    pub noise_sigma: f64,
    /// Planted architecture; a uniform draw from the space when absent.
    pub teacher: Option<Architecture>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            dims: ToyDims::default(),
            sizes: SplitSizes::default(),
            noise_sigma: 0.01,
            teacher: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub version: u32,
    pub space: SpaceDef,
    pub task: TaskConfig,
    pub train: TrainConfig,
    pub n_initial: usize,
    pub pool: PredictionPool,
    pub top_k: usize,
    pub gbdt: GbdtConfig,
    pub encoding: FeatureEncoding,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            version: crate::costmodel::CONFIG_VERSION,
            space: SpaceDef::default(),
            task: TaskConfig::default(),
            train: TrainConfig::default(),
            n_initial: 1000,
            pool: PredictionPool::Sampled(1_000_000),
            top_k: 300,
            gbdt: GbdtConfig::default(),
            encoding: FeatureEncoding::OneHot,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != crate::costmodel::CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {})",
                self.version,
                crate::costmodel::CONFIG_VERSION
            )));
        }
        let size = space_size(&self.space)?;
        self.task.dims.validate(&self.space)?;
        self.train.validate()?;
        self.gbdt.validate()?;
        if self.n_initial < 2 {
            return Err(Error::Config("n_initial must be at least 2 to fit the predictor".into()));
        }
        if self.n_initial as u64 > size {
            return Err(Error::Config(format!(
                "n_initial = {} exceeds the {size} architectures in the space",
                self.n_initial
            )));
        }
        let pool = match self.pool {
            PredictionPool::Full => size,
            PredictionPool::Sampled(m) => {
                if m > size - self.n_initial as u64 {
                    return Err(Error::Config(format!(
                        "sampled pool of {m} exceeds the {} unlabelled architectures",
                        size - self.n_initial as u64
                    )));
                }
                m
            }
        };
        if self.top_k == 0 || self.top_k as u64 > pool {
            return Err(Error::Config(format!("top_k = {} must lie in 1..={pool}", self.top_k)));
        }
        if let Some(t) = &self.task.teacher {
            t.validate(&self.space)?;
        }
        Ok(())
    }

    /// The planted-teacher dataset this config describes.
    pub fn dataset(&self) -> Result<SynthDataset> {
        let teacher = match &self.task.teacher {
            Some(t) => t.clone(),
            None => crate::searchspace::sample_uniform(&self.space, rng::derive_seed(self.seed, "teacher_arch"), 1)
                .remove(0),
        };
        make_synth_dataset(
            &self.space,
            self.task.dims,
            &teacher,
            self.seed,
            self.task.sizes,
            self.task.noise_sigma,
        )
    }
}

/// Source of validation losses.
pub trait LossOracle: Sync {
    fn loss(&self, arch: &Architecture) -> Result<f64>;
    /// Seed recorded alongside each loss.
    fn seed(&self) -> u64;
}

pub struct SupernetOracle<'a> {
    pub state: &'a SupernetState,
    pub dataset: &'a SynthDataset,
}

impl LossOracle for SupernetOracle<'_> {
    fn loss(&self, arch: &Architecture) -> Result<f64> {
        crate::supernet::evaluate_arch(self.state, arch, self.dataset).map(|r| r.val_loss)
    }

    fn seed(&self) -> u64 {
        self.dataset.seed
    }
}

/// Externally produced architecture/loss pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTable {
    pub losses: BTreeMap<Architecture, f64>,
    pub seed: u64,
}

impl LossTable {
    pub fn from_records(records: &[EvalRecord]) -> Result<Self> {
        let mut losses = BTreeMap::new();
        for r in records {
            if !(r.val_loss.is_finite() && r.val_loss >= 0.0) {
                return Err(Error::Data(format!("loss of {} must be finite and ≥ 0", r.arch)));
            }
            losses.insert(r.arch.clone(), r.val_loss);
        }
        Ok(LossTable {
            losses,
            seed: records.first().map_or(0, |r| r.seed),
        })
    }
}

impl LossOracle for LossTable {
    fn loss(&self, arch: &Architecture) -> Result<f64> {
        self.losses
            .get(arch)
            .copied()
            .ok_or_else(|| Error::Data(format!("no loss recorded for {arch}")))
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

/// Side channels for a search run. Defaults: no clock, no cache, sequential evaluation.
pub trait SearchHooks {
    /// Monotonic seconds, if a clock is available.
    fn now(&mut self) -> Option<f64> {
        None
    }

    /// A previously logged loss for `arch`, if resuming.
    fn cached(&mut self, _arch: &Architecture) -> Option<f64> {
        None
    }

    /// Called once per fresh evaluation, in candidate order.
    fn record(&mut self, _record: &EvalRecord) -> Result<()> {
        Ok(())
    }

    /// Evaluate in order; implementations may fan out but must keep order.
    fn evaluate(&mut self, oracle: &dyn LossOracle, archs: &[Architecture]) -> Result<Vec<f64>> {
        archs.iter().map(|a| oracle.loss(a)).collect()
    }
}

/// Hooks that do nothing beyond the defaults.
pub struct NoHooks;
impl SearchHooks for NoHooks {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Unique architectures labelled by the oracle.
    pub supernet_evals: u64,
    /// Re-evaluation requests answered from an earlier label.
    pub reused_evals: u64,
    pub gbdt_predictions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Gbdt,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub method: SearchMethod,
    pub best_arch: Architecture,
    pub best_val_loss: f64,
    pub mean_val_loss: f64,
    pub initial: Vec<EvalRecord>,
    pub reevaluated: Vec<EvalRecord>,
    /// Predicted losses of the re-evaluated candidates, same order.
    pub predicted: Vec<f64>,
    pub budget: Budget,
    pub seed: u64,
    pub teacher: Option<Architecture>,
    pub supernet_fingerprint: Option<String>,
    /// Wall-clock per phase; excluded from reproducibility comparisons.
    pub timings: Vec<PhaseTiming>,
}

impl SearchReport {
    /// The report with wall-clock fields cleared.
    pub fn without_timings(&self) -> Self {
        SearchReport {
            timings: Vec::new(),
            ..self.clone()
        }
    }
}

struct Clock<'h, H: SearchHooks + ?Sized> {
    hooks: &'h mut H,
    last: Option<f64>,
    timings: Vec<PhaseTiming>,
}

impl<'h, H: SearchHooks + ?Sized> Clock<'h, H> {
    fn new(hooks: &'h mut H) -> Self {
        let last = hooks.now();
        Clock {
            hooks,
            last,
            timings: Vec::new(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = self.hooks.now();
        if let (Some(a), Some(b)) = (self.last, now) {
            self.timings.push(PhaseTiming {
                phase: phase.into(),
                seconds: b - a,
            });
        }
        self.last = now;
    }
}

/// Labels architectures through the oracle, deduplicating by genotype.
struct Labeller<'o> {
    oracle: &'o dyn LossOracle,
    known: BTreeMap<Architecture, f64>,
    budget: Budget,
}

impl<'o> Labeller<'o> {
    fn label<H: SearchHooks + ?Sized>(&mut self, hooks: &mut H, archs: &[Architecture]) -> Result<Vec<EvalRecord>> {
        let mut fresh = Vec::new();
        let mut pending = BTreeSet::new();
        for a in archs {
            if self.known.contains_key(a) {
                self.budget.reused_evals += 1;
            } else if pending.insert(a.clone()) {
                fresh.push(a.clone());
            }
        }
        let mut missing = Vec::new();
        let mut resolved = BTreeMap::new();
        for a in &fresh {
            match hooks.cached(a) {
                Some(l) => {
                    resolved.insert(a.clone(), l);
                }
                None => missing.push(a.clone()),
            }
        }
        let computed = hooks.evaluate(self.oracle, &missing)?;
        if computed.len() != missing.len() {
            return Err(Error::Data("evaluator returned the wrong number of losses".into()));
        }
        for (a, l) in missing.iter().zip(computed) {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::NonFinite(format!("validation loss of {a}")));
            }
            hooks.record(&EvalRecord {
                arch: a.clone(),
                val_loss: l,
                seed: self.oracle.seed(),
            })?;
            resolved.insert(a.clone(), l);
        }
        self.budget.supernet_evals += fresh.len() as u64;
        self.known.extend(resolved);
        Ok(archs
            .iter()
            .map(|a| EvalRecord {
                arch: a.clone(),
                val_loss: self.known[a],
                seed: self.oracle.seed(),
            })
            .collect())
    }
}

/// `n` distinct uniform draws, in draw order.
pub fn sample_distinct(space: &SpaceDef, seed: u64, name: &str, n: usize) -> Result<Vec<Architecture>> {
    let size = space_size(space)?;
    if n as u64 > size {
        return Err(Error::Config(format!("cannot draw {n} distinct architectures from {size}")));
    }
    let mut rng = rng::stream(seed, name);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let idx = rng.random_range(0..size);
        if seen.insert(idx) {
            out.push(arch_at(space, idx));
        }
    }
    Ok(out)
}

fn min_record(records: &[EvalRecord]) -> Result<&EvalRecord> {
    records
        .iter()
        .reduce(|best, r| if r.val_loss < best.val_loss { r } else { best })
        .ok_or_else(|| Error::Data("no evaluated architectures".into()))
}

fn mean_loss(records: &[EvalRecord]) -> f64 {
    records.iter().map(|r| r.val_loss).sum::<f64>() / records.len() as f64
}

/// Train a fresh supernet on `dataset` as configured.
pub fn train_phase(config: &SearchConfig, dataset: &SynthDataset) -> Result<SupernetState> {
    let mut state = SupernetState::new(&config.space, config.task.dims, rng::derive_seed(config.seed, "supernet"))?;
    train_supernet(&mut state, dataset, &config.train, rng::derive_seed(config.seed, "train"))?;
    Ok(state)
}

/// Phases 2–6 against any loss oracle.
pub fn gbdt_nas_with_oracle<H: SearchHooks + ?Sized>(
    config: &SearchConfig,
    oracle: &dyn LossOracle,
    hooks: &mut H,
) -> Result<SearchReport> {
    config.validate()?;
    let space = &config.space;
    let mut clock = Clock::new(hooks);
    let mut labeller = Labeller {
        oracle,
        known: BTreeMap::new(),
        budget: Budget::default(),
    };

    let initial_archs = sample_distinct(space, config.seed, "search.initial", config.n_initial)
        .map_err(|e| e.in_phase("sample"))?;
    let initial = labeller
        .label(clock.hooks, &initial_archs)
        .map_err(|e| e.in_phase("initial_evaluation"))?;
    clock.lap("initial_evaluation");

    let features = initial
        .iter()
        .map(|r| config.encoding.encode(&r.arch, space))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_phase("fit_predictor"))?;
    let targets: Vec<f64> = initial.iter().map(|r| r.val_loss).collect();
    let model = fit(&features, &targets, &config.gbdt).map_err(|e| e.in_phase("fit_predictor"))?;
    clock.lap("fit_predictor");

    let (top, predictions) = predict_pool(config, &model, &initial_archs).map_err(|e| e.in_phase("predict"))?;
    labeller.budget.gbdt_predictions = predictions;
    clock.lap("predict");

    let (candidates, predicted): (Vec<Architecture>, Vec<f64>) = top.into_iter().unzip();
    let reevaluated = labeller
        .label(clock.hooks, &candidates)
        .map_err(|e| e.in_phase("reevaluation"))?;
    clock.lap("reevaluation");

    let best = min_record(&reevaluated).map_err(|e| e.in_phase("select"))?.clone();
    Ok(SearchReport {
        method: SearchMethod::Gbdt,
        best_arch: best.arch,
        best_val_loss: best.val_loss,
        mean_val_loss: mean_loss(&reevaluated),
        initial,
        reevaluated,
        predicted,
        budget: labeller.budget,
        seed: config.seed,
        teacher: None,
        supernet_fingerprint: None,
        timings: clock.timings,
    })
}

fn predict_pool(
    config: &SearchConfig,
    model: &GbdtModel,
    labelled: &[Architecture],
) -> Result<(Vec<(Architecture, f64)>, u64)> {
    let space = &config.space;
    let mut top = TopK::new(config.top_k);
    let offer = |idx: u64, top: &mut TopK<u64>| -> Result<()> {
        let arch = arch_at(space, idx);
        let row = config.encoding.encode(&arch, space)?;
        top.push(idx, model.predict_row(&row)?);
        Ok(())
    };
    match config.pool {
        PredictionPool::Full => {
            for idx in 0..space_size(space)? {
                offer(idx, &mut top)?;
            }
        }
        PredictionPool::Sampled(m) => {
            let size = space_size(space)?;
            let mut seen: BTreeSet<u64> = labelled.iter().map(|a| arch_index(a, space)).collect::<Result<_>>()?;
            let mut rng = rng::stream(config.seed, "search.pool");
            let mut drawn = 0u64;
            while drawn < m {
                let idx = rng.random_range(0..size);
                if seen.insert(idx) {
                    offer(idx, &mut top)?;
                    drawn += 1;
                }
            }
        }
    }
    let predictions = top.seen() as u64;
    let ranked = top
        .into_sorted()
        .into_iter()
        .map(|(idx, p)| (arch_at(space, idx), p))
        .collect();
    Ok((ranked, predictions))
}

/// Full GBDT-NAS run: train the supernet on `dataset`, then search with it.
/// Returns the report and the trained supernet.
pub fn run_gbdt_nas<H: SearchHooks + ?Sized>(
    config: &SearchConfig,
    dataset: &SynthDataset,
    hooks: &mut H,
) -> Result<(SearchReport, SupernetState)> {
    config.validate()?;
    let start = hooks.now();
    let state = train_phase(config, dataset).map_err(|e| e.in_phase("train_supernet"))?;
    let trained = hooks.now();
    let oracle = SupernetOracle {
        state: &state,
        dataset,
    };
    let mut report = gbdt_nas_with_oracle(config, &oracle, hooks)?;
    finish(&mut report, dataset, &state, start, trained);
    Ok((report, state))
}

fn finish(report: &mut SearchReport, dataset: &SynthDataset, state: &SupernetState, start: Option<f64>, end: Option<f64>) {
    report.teacher = Some(dataset.teacher_arch.clone());
    report.supernet_fingerprint = Some(format!("{:016x}", state.fingerprint()));
    if let (Some(a), Some(b)) = (start, end) {
        report.timings.insert(
            0,
            PhaseTiming {
                phase: "train_supernet".into(),
                seconds: b - a,
            },
        );
    }
}

/// Evaluate `n` distinct uniform architectures with an existing oracle.
pub fn random_search_with_oracle<H: SearchHooks + ?Sized>(
    space: &SpaceDef,
    oracle: &dyn LossOracle,
    n: usize,
    seed: u64,
    hooks: &mut H,
) -> Result<SearchReport> {
    if n == 0 {
        return Err(Error::Config("random search needs n ≥ 1".into()));
    }
    let mut clock = Clock::new(hooks);
    let archs = sample_distinct(space, seed, "search.random", n).map_err(|e| e.in_phase("sample"))?;
    let mut labeller = Labeller {
        oracle,
        known: BTreeMap::new(),
        budget: Budget::default(),
    };
    let records = labeller.label(clock.hooks, &archs).map_err(|e| e.in_phase("evaluation"))?;
    clock.lap("evaluation");
    let best = min_record(&records)?.clone();
    Ok(SearchReport {
        method: SearchMethod::Random,
        best_arch: best.arch,
        best_val_loss: best.val_loss,
        mean_val_loss: mean_loss(&records),
        initial: records,
        reevaluated: Vec::new(),
        predicted: Vec::new(),
        budget: labeller.budget,
        seed,
        teacher: None,
        supernet_fingerprint: None,
        timings: clock.timings,
    })
}

/// Train the supernet as configured and evaluate `n` random architectures.
pub fn run_random_search<H: SearchHooks + ?Sized>(
    config: &SearchConfig,
    dataset: &SynthDataset,
    n: usize,
    hooks: &mut H,
) -> Result<(SearchReport, SupernetState)> {
    config.validate()?;
    let start = hooks.now();
    let state = train_phase(config, dataset).map_err(|e| e.in_phase("train_supernet"))?;
    let trained = hooks.now();
    let oracle = SupernetOracle {
        state: &state,
        dataset,
    };
    let mut report = random_search_with_oracle(&config.space, &oracle, n, config.seed, hooks)?;
    finish(&mut report, dataset, &state, start, trained);
    Ok((report, state))
}

/// The three reference configurations, in report order.
pub fn named_baselines() -> Vec<ModelConfig> {
    alloc::vec![
        ModelConfig::fastspeech2(),
        ModelConfig::fastspeech2_small(),
        ModelConfig::lightspeech(),
    ]
}

/// Cost breakdowns of the reference configurations.
pub fn evaluate_named_baselines(query: &MacsQuery) -> Result<Vec<CostBreakdown>> {
    named_baselines().iter().map(|c| model_macs(c, query)).collect()
}
