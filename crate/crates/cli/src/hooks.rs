//! Search hooks for the command line: wall clock, resume cache, eval log and worker fan-out.

use std::collections::HashMap;
use std::thread;
use std::time::Instant;

use lightspeech_core::search::{LossOracle, SearchHooks};
use lightspeech_core::searchspace::Architecture;
use lightspeech_core::supernet::EvalRecord;
use lightspeech_core::{Error, Result};

use crate::evallog::EvalLogWriter;

const BATCH_PER_WORKER: usize = 32;

pub struct CliHooks {
    start: Instant,
    cache: HashMap<Architecture, f64>,
    log: Option<EvalLogWriter>,
    workers: usize,
    /// Labels answered from the cache.
    pub resumed: usize,
}

impl CliHooks {
    pub fn new(workers: usize) -> Self {
        CliHooks {
            start: Instant::now(),
            cache: HashMap::new(),
            log: None,
            workers: workers.max(1),
            resumed: 0,
        }
    }

    /// Serve earlier labels produced under `seed`.
    pub fn with_cache(mut self, records: &[EvalRecord], seed: u64) -> Self {
        self.cache
            .extend(records.iter().filter(|r| r.seed == seed).map(|r| (r.arch.clone(), r.val_loss)));
        self
    }

    pub fn with_log(mut self, log: EvalLogWriter) -> Self {
        self.log = Some(log);
        self
    }

    fn write(&mut self, record: &EvalRecord) -> Result<()> {
        match &mut self.log {
            Some(log) => log.write(record).map_err(|e| Error::Data(e.to_string())),
            None => Ok(()),
        }
    }
}

/// Evaluate on `workers` threads, results in input order.
pub fn fan_out(oracle: &dyn LossOracle, archs: &[Architecture], workers: usize) -> Result<Vec<f64>> {
    if workers <= 1 || archs.len() < 2 {
        return archs.iter().map(|a| oracle.loss(a)).collect();
    }
    let chunk = archs.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = archs
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|a| oracle.loss(a)).collect::<Result<Vec<f64>>>()))
            .collect();
        let mut out = Vec::with_capacity(archs.len());
        for h in handles {
            out.extend(h.join().map_err(|_| Error::Data("evaluation worker panicked".into()))??);
        }
        Ok(out)
    })
}

impl SearchHooks for CliHooks {
    fn now(&mut self) -> Option<f64> {
        Some(self.start.elapsed().as_secs_f64())
    }

    fn cached(&mut self, arch: &Architecture) -> Option<f64> {
        let hit = self.cache.get(arch).copied();
        self.resumed += usize::from(hit.is_some());
        hit
    }

    fn record(&mut self, _record: &EvalRecord) -> Result<()> {
        Ok(())
    }

    fn evaluate(&mut self, oracle: &dyn LossOracle, archs: &[Architecture]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(archs.len());
        for batch in archs.chunks(BATCH_PER_WORKER * self.workers) {
            let losses = fan_out(oracle, batch, self.workers)?;
            for (arch, &val_loss) in batch.iter().zip(&losses) {
                self.write(&EvalRecord {
                    arch: arch.clone(),
                    val_loss,
                    seed: oracle.seed(),
                })?;
            }
            out.extend(losses);
        }
        Ok(out)
    }
}
