//! Trained supernet on disk: `supernet.bin` holds the weights, `supernet.json`
//! the search config needed to rebuild the network and its synthetic task.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lightspeech_core::rng;
use lightspeech_core::search::SearchConfig;
use lightspeech_core::supernet::{SupernetState, SynthDataset};

use crate::error::{CliError, CliResult};
use crate::files::{read_json, write_json};
use crate::weights;

pub const WEIGHTS_FILE: &str = "supernet.bin";
pub const META_FILE: &str = "supernet.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: SearchConfig,
    pub fingerprint: String,
    pub tensors: usize,
    pub params: usize,
}

pub fn fingerprint_hex(state: &SupernetState) -> String {
    format!("{:016x}", state.fingerprint())
}

/// Write both files; returns their paths.
pub fn save(dir: &Path, config: &SearchConfig, state: &SupernetState) -> CliResult<Vec<PathBuf>> {
    let named = state.named_tensors();
    let bin = dir.join(WEIGHTS_FILE);
    weights::save(&bin, &named)?;
    let meta = CheckpointMeta {
        config: config.clone(),
        fingerprint: fingerprint_hex(state),
        tensors: named.len(),
        params: state.param_count(),
    };
    let json = dir.join(META_FILE);
    write_json(&json, &meta)?;
    Ok(vec![bin, json])
}

pub fn exists(dir: &Path) -> bool {
    dir.join(WEIGHTS_FILE).is_file() && dir.join(META_FILE).is_file()
}

pub fn read_meta(dir: &Path) -> CliResult<CheckpointMeta> {
    read_json(&dir.join(META_FILE))
}

/// Rebuild the supernet and its dataset, checking the weight fingerprint.
pub fn load(dir: &Path) -> CliResult<(CheckpointMeta, SupernetState, SynthDataset)> {
    if !exists(dir) {
        return Err(CliError::runtime(format!(
            "{} does not contain {WEIGHTS_FILE} and {META_FILE}",
            dir.display()
        )));
    }
    let meta = read_meta(dir)?;
    meta.config.validate()?;
    let config = &meta.config;
    let mut state =
        SupernetState::new(&config.space, config.task.dims, rng::derive_seed(config.seed, "supernet"))?;
    state.load_named(weights::load(&dir.join(WEIGHTS_FILE))?)?;
    let got = fingerprint_hex(&state);
    if got != meta.fingerprint {
        return Err(CliError::runtime(format!(
            "checkpoint fingerprint {got} does not match the recorded {}",
            meta.fingerprint
        )));
    }
    let dataset = config.dataset()?;
    Ok((meta, state, dataset))
}
