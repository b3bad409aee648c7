//! Argument definitions and command dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lightspeech_core::costmodel::{model_macs, CostBreakdown, MacsQuery, ModelConfig, CONFIG_VERSION};
use lightspeech_core::search::{
    gbdt_nas_with_oracle, named_baselines, random_search_with_oracle, train_phase, PhaseTiming, SearchConfig,
    SearchReport, SupernetOracle,
};
use lightspeech_core::searchspace::{enumerate, parse_arch, sample_uniform, space_size, SpaceDef};
use lightspeech_core::supernet::EvalRecord;

use crate::checkpoint;
use crate::error::{CliError, CliResult};
use crate::evallog::{self, EvalLogWriter};
use crate::files::{read_config, to_json, write_json};
use crate::hooks::CliHooks;
use crate::manifest::RunManifest;
use crate::profile::profile;
use crate::render::{comparison_table, cost_table};

pub const EVAL_LOG: &str = "evals.jsonl";

#[derive(Debug, Parser)]
#[command(name = "lightspeech", version, about = "Cost model and predictor-guided architecture search for lightweight TTS")]
pub struct Cli {
    /// Threads used to evaluate candidates; profiling always runs on one.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Size, sample or enumerate the search space.
    Space(SpaceArgs),
    /// Parameters, MACs and optional RTF of one model config.
    Cost(CostArgs),
    /// Run GBDT-NAS or the random-search baseline.
    Search(SearchArgs),
    /// Evaluate architectures against a trained supernet checkpoint.
    Eval(EvalArgs),
    /// Compare the three reference models.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["size", "sample", "enumerate"])))]
pub struct SpaceArgs {
    /// Space file `{"version": 1, "space": {...}}`; the full 4+4-slot space when omitted.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub size: bool,
    #[arg(long, value_name = "N")]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, num_args = 2, value_names = ["OFFSET", "LIMIT"])]
    pub enumerate: Option<Vec<u64>>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Phoneme and mel-frame counts.
    #[arg(long, num_args = 2, value_names = ["INPUT", "OUTPUT"], default_values_t = [128usize, 740])]
    pub lengths: Vec<usize>,
    /// Measure per-component RTF as the median of this many runs.
    #[arg(long, value_name = "REPS")]
    pub profile: Option<usize>,
    #[arg(long)]
    pub json: bool,
    /// Write cost.json and manifest.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Gbdt,
    Random,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Baseline::Gbdt)]
    pub baseline: Baseline,
    /// Architectures drawn by the random baseline.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory holding supernet.bin and supernet.json.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "arch", required = true, num_args = 1..)]
    pub archs: Vec<String>,
    #[arg(long)]
    pub json: bool,
    /// Write evals.json and manifest.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, num_args = 2, value_names = ["INPUT", "OUTPUT"], default_values_t = [128usize, 740])]
    pub lengths: Vec<usize>,
    #[arg(long, value_name = "REPS")]
    pub profile: Option<usize>,
    #[arg(long)]
    pub json: bool,
    /// Write report.json and manifest.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub version: u32,
    pub space: SpaceDef,
}

fn load_space(path: Option<&Path>) -> CliResult<SpaceDef> {
    let Some(path) = path else {
        return Ok(SpaceDef::default());
    };
    let file: SpaceFile = read_config(path)?;
    if file.version != CONFIG_VERSION {
        return Err(CliError::usage(format!(
            "unsupported space file version {} (expected {CONFIG_VERSION})",
            file.version
        )));
    }
    Ok(file.space)
}

fn query(lengths: &[usize]) -> CliResult<MacsQuery> {
    let q = MacsQuery::new(lengths[0], lengths[1]);
    q.validate().map_err(CliError::usage)?;
    Ok(q)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Run a parsed command. `args` is recorded in manifests.
pub fn execute(cli: Cli, args: Vec<String>, out: &mut dyn Write) -> CliResult<()> {
    let workers = cli.workers as usize;
    match cli.command {
        Command::Space(a) => cmd_space(a, out),
        Command::Cost(a) => cmd_cost(a, args, out),
        Command::Search(a) => cmd_search(a, workers, args, out),
        Command::Eval(a) => cmd_eval(a, workers, args, out),
        Command::Report(a) => cmd_report(a, args, out),
    }
}

fn cmd_space(a: SpaceArgs, out: &mut dyn Write) -> CliResult<()> {
    let space = load_space(a.space.as_deref())?;
    if a.size {
        let n = space_size(&space)?;
        return emit(out, &if a.json { to_json(&n)? } else { n.to_string() });
    }
    let archs = if let Some(n) = a.sample {
        sample_uniform(&space, a.seed, n)
    } else {
        let page = a.enumerate.unwrap_or_default();
        enumerate(&space, page[0], page[1]).map_err(CliError::usage)?
    };
    if a.json {
        emit(out, &to_json(&archs)?)
    } else {
        archs.iter().try_for_each(|arch| emit(out, &arch.to_string()))
    }
}

fn cost_of(config: &ModelConfig, q: &MacsQuery, reps: Option<usize>) -> CliResult<CostBreakdown> {
    match reps {
        Some(r) => profile(config, q, r),
        None => Ok(model_macs(config, q)?),
    }
}

fn cmd_cost(a: CostArgs, args: Vec<String>, out: &mut dyn Write) -> CliResult<()> {
    let mut manifest = RunManifest::begin("cost", args);
    let config: ModelConfig = read_config(&a.model)?;
    config.validate().map_err(CliError::usage)?;
    let q = query(&a.lengths)?;
    let report = cost_of(&config, &q, a.profile)?;
    emit(out, &if a.json { to_json(&report)? } else { cost_table(&report) })?;
    if let Some(dir) = a.out {
        ensure_dir(&dir)?;
        let path = dir.join("cost.json");
        write_json(&path, &report)?;
        manifest.config_path = Some(a.model);
        manifest.outputs.push(path);
        manifest.finish(&dir.join("manifest.json"))?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs, args: Vec<String>, out: &mut dyn Write) -> CliResult<()> {
    let mut manifest = RunManifest::begin("report", args);
    let q = query(&a.lengths)?;
    let reports = named_baselines()
        .iter()
        .map(|c| cost_of(c, &q, a.profile))
        .collect::<CliResult<Vec<_>>>()?;
    emit(out, &if a.json { to_json(&reports)? } else { comparison_table(&reports) })?;
    if let Some(dir) = a.out {
        ensure_dir(&dir)?;
        let path = dir.join("report.json");
        write_json(&path, &reports)?;
        manifest.outputs.push(path);
        manifest.finish(&dir.join("manifest.json"))?;
    }
    Ok(())
}

/// Output file names for a search method.
pub fn search_files(baseline: Baseline) -> (&'static str, &'static str) {
    match baseline {
        Baseline::Gbdt => ("report.json", "manifest.json"),
        Baseline::Random => ("random_report.json", "random_manifest.json"),
    }
}

fn cmd_search(a: SearchArgs, workers: usize, args: Vec<String>, out: &mut dyn Write) -> CliResult<()> {
    let mut manifest = RunManifest::begin("search", args);
    let mut config: SearchConfig = read_config(&a.config)?;
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::usage)?;
    if a.baseline == Baseline::Random && a.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    ensure_dir(&a.out)?;
    let log_path = a.out.join(EVAL_LOG);
    let logged = evallog::load(&log_path)?;

    let clock = Instant::now();
    let (state, dataset) = if checkpoint::exists(&a.out) {
        let meta = checkpoint::read_meta(&a.out)?;
        if meta.config != config {
            return Err(CliError::runtime(format!(
                "{} holds a run with a different config or seed; use a fresh --out",
                a.out.display()
            )));
        }
        let (_, state, dataset) = checkpoint::load(&a.out)?;
        (state, dataset)
    } else {
        if !logged.is_empty() {
            return Err(CliError::runtime(format!(
                "{} has evaluations but no supernet checkpoint",
                log_path.display()
            )));
        }
        let dataset = config.dataset()?;
        let state = train_phase(&config, &dataset).map_err(|e| e.in_phase("train_supernet"))?;
        checkpoint::save(&a.out, &config, &state)?;
        (state, dataset)
    };
    let trained = clock.elapsed().as_secs_f64();

    let oracle = SupernetOracle {
        state: &state,
        dataset: &dataset,
    };
    let mut hooks = CliHooks::new(workers)
        .with_cache(&logged, dataset.seed)
        .with_log(EvalLogWriter::append(&log_path)?);
    let mut report: SearchReport = match a.baseline {
        Baseline::Gbdt => gbdt_nas_with_oracle(&config, &oracle, &mut hooks)?,
        Baseline::Random => random_search_with_oracle(&config.space, &oracle, a.n, config.seed, &mut hooks)?,
    };
    report.teacher = Some(dataset.teacher_arch.clone());
    report.supernet_fingerprint = Some(checkpoint::fingerprint_hex(&state));
    report.timings.insert(
        0,
        PhaseTiming {
            phase: "train_supernet".into(),
            seconds: trained,
        },
    );

    let (report_name, manifest_name) = search_files(a.baseline);
    let report_path = a.out.join(report_name);
    write_json(&report_path, &report)?;
    emit(out, &report.best_arch.to_string())?;

    manifest.config_path = Some(a.config);
    manifest.seed = Some(config.seed);
    manifest.outputs = vec![
        report_path,
        log_path,
        a.out.join(checkpoint::WEIGHTS_FILE),
        a.out.join(checkpoint::META_FILE),
    ];
    manifest.finish(&a.out.join(manifest_name))
}

fn cmd_eval(a: EvalArgs, workers: usize, args: Vec<String>, out: &mut dyn Write) -> CliResult<()> {
    let mut manifest = RunManifest::begin("eval", args);
    let (meta, state, dataset) = checkpoint::load(&a.checkpoint)?;
    let archs = a
        .archs
        .iter()
        .map(|s| parse_arch(s, &meta.config.space).map_err(CliError::usage))
        .collect::<CliResult<Vec<_>>>()?;
    let oracle = SupernetOracle {
        state: &state,
        dataset: &dataset,
    };
    let losses = crate::hooks::fan_out(&oracle, &archs, workers)?;
    let records: Vec<EvalRecord> = archs
        .into_iter()
        .zip(losses)
        .map(|(arch, val_loss)| EvalRecord {
            arch,
            val_loss,
            seed: dataset.seed,
        })
        .collect();
    if a.json {
        emit(out, &to_json(&records)?)?;
    } else {
        for r in &records {
            emit(out, &format!("{}\t{}", r.arch, r.val_loss))?;
        }
    }
    if let Some(dir) = a.out {
        ensure_dir(&dir)?;
        let path = dir.join("evals.json");
        write_json(&path, &records)?;
        manifest.seed = Some(meta.config.seed);
        manifest.config_path = Some(a.checkpoint.join(checkpoint::META_FILE));
        manifest.outputs.push(path);
        manifest.finish(&dir.join("manifest.json"))?;
    }
    Ok(())
}
