//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion does.

mod common;

use std::time::{Duration, Instant};

use rand::RngExt;

use lightspeech::cli::{execute, Cli};
use lightspeech::hooks::CliHooks;
use lightspeech::profile::profile;
use lightspeech::render::cost_table;
use lightspeech_core::costmodel::{
    component, model_macs, model_params, op_macs, op_params, ConvKind, CostBreakdown, CostOp, MacsQuery,
    ModelConfig, PredictorSpec,
};
use lightspeech_core::gbdt::{fit, fit_traced, GbdtConfig};
use lightspeech_core::kernels::{
    grad_check, Conv1d, Ffn, LayerNorm, Linear, MacCounter, Mhsa, OpInstance, SepConv, SlotDims, Tensor, WeightInit,
};
use lightspeech_core::model::{synthetic_inputs, TtsModel};
use lightspeech_core::rng;
use lightspeech_core::search::{random_search_with_oracle, run_gbdt_nas, NoHooks, SearchConfig, SupernetOracle};
use lightspeech_core::searchspace::{encode_onehot, enumerate, sample_uniform, Architecture, SpaceDef, VOCABULARY};
use lightspeech_core::supernet::evaluate_batch;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn search_config(name: &str) -> SearchConfig {
    let text = std::fs::read_to_string(common::config(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn c1_space_size() -> Outcome {
    let cli = <Cli as clap::Parser>::try_parse_from(["lightspeech", "space", "--size"]).unwrap();
    let mut out = Vec::new();
    execute(cli, vec![], &mut out).unwrap();
    let printed = String::from_utf8(out).unwrap();
    outcome(printed.trim() == "214358881", format!("printed {}", printed.trim()))
}

fn c2_table1_params() -> Outcome {
    let r = model_params(&ModelConfig::fastspeech2()).unwrap();
    let p = |name: &str| r.component(name).unwrap().params as f64;
    let (enc, dur, pitch, energy) = (p(component::ENCODER), p(component::DURATION), p(component::PITCH), p(component::ENERGY));
    let core = r.totals.core.params as f64;
    let aux = r.totals.with_auxiliaries.params as f64;
    let pass = within(enc, 11.44e6, 11.68e6)
        && within(dur, 0.39e6, 0.41e6)
        && within(pitch, 1.62e6, 1.66e6)
        && pitch == energy
        && within(core, 26.5e6, 27.5e6)
        && within(aux, 26.5e6, 27.5e6);
    outcome(
        pass,
        format!("encoder {enc} duration {dur} pitch {pitch} energy {energy} total core {core} / with-auxiliaries {aux}"),
    )
}

fn c3_lightspeech_bands() -> Outcome {
    let q = MacsQuery::new(128, 740);
    let ls = model_macs(&ModelConfig::lightspeech(), &q).unwrap();
    let fs = model_macs(&ModelConfig::fastspeech2(), &q).unwrap();
    let ls_params = ls.totals.with_auxiliaries.params as f64;
    let ls_macs = ls.totals.core.macs as f64;
    let fs_macs = fs.totals.core.macs as f64;
    let params_ratio = fs.totals.with_auxiliaries.params as f64 / ls_params;
    let macs_ratio = fs_macs / ls_macs;
    let table = cost_table(&ls);
    let printed = table.contains("total (core)")
        && table.contains("total (with-auxiliaries)")
        && table.contains("conventions:")
        && !ls.conventions.is_empty();
    let pass = within(ls_params, 1.35e6, 2.25e6)
        && within(ls_macs, 0.40e9, 1.00e9)
        && within(fs_macs, 10.0e9, 15.0e9)
        && params_ratio >= 10.0
        && macs_ratio >= 10.0
        && printed;
    outcome(
        pass,
        format!(
            "LightSpeech params {ls_params} with-auxiliaries ({} core), MACs {:.3}G; FastSpeech 2 MACs {:.3}G; ratios {params_ratio:.1}x params, {macs_ratio:.1}x MACs; both totals printed: {printed}",
            ls.totals.core.params,
            ls_macs / 1e9,
            fs_macs / 1e9
        ),
    )
}

fn rtf(r: &CostBreakdown, name: &str) -> f64 {
    r.component(name).and_then(|c| c.rtf).unwrap_or(f64::NAN)
}

fn c4_rtf_direction() -> Outcome {
    let q = MacsQuery::new(128, 740);
    let ls = profile(&ModelConfig::lightspeech(), &q, 3).unwrap();
    let fs = profile(&ModelConfig::fastspeech2(), &q, 3).unwrap();
    let (ls_total, fs_total) = (ls.totals.core.rtf.unwrap(), fs.totals.core.rtf.unwrap());
    let (enc, dec) = (rtf(&fs, component::ENCODER), rtf(&fs, component::DECODER));
    outcome(
        ls_total < fs_total && dec > enc,
        format!(
            "RTF LightSpeech {ls_total:.3e} vs FastSpeech 2 {fs_total:.3e} ({:.1}x); baseline decoder {dec:.3e} > encoder {enc:.3e}",
            fs_total / ls_total
        ),
    )
}

fn spec(r: &mut impl RngExt) -> PredictorSpec {
    PredictorSpec {
        layers: r.random_range(1..4),
        kernel: [1, 3, 5][r.random_range(0..3)],
        filter: r.random_range(1..12),
        conv: if r.random() { ConvKind::Vanilla } else { ConvKind::Sepconv },
    }
}

fn random_config(seed: u64) -> ModelConfig {
    let mut r = rng::stream(seed, "acceptance.config");
    let hidden = [8, 16][r.random_range(0..2)];
    let mut slots = || -> Vec<_> {
        (0..r.random_range(0..4))
            .map(|_| VOCABULARY[r.random_range(0..VOCABULARY.len())])
            .collect()
    };
    let architecture = Architecture::new(slots(), slots());
    ModelConfig {
        version: 1,
        name: format!("random-{seed}"),
        hidden,
        architecture,
        phoneme_vocab: r.random_range(1..20),
        mel_dim: r.random_range(1..10),
        ffn_filter: r.random_range(1..40),
        ffn_kernel: [1, 3, 5, 9][r.random_range(0..4)],
        duration_predictor: spec(&mut r),
        pitch_predictor: spec(&mut r),
        energy_predictor: if r.random() { Some(spec(&mut r)) } else { None },
        include_bias: r.random(),
        include_layernorm: r.random(),
        pitch_at_phoneme_level: r.random(),
        max_positions: r.random_range(30..60),
        pitch_bins: r.random_range(1..32),
    }
}

fn c5_oracle_equivalence() -> Outcome {
    let mut mismatches = Vec::new();
    for seed in 0..50 {
        let cfg = random_config(seed);
        let analytic = model_params(&cfg).unwrap();
        let model = TtsModel::new(&cfg, seed).unwrap();
        for ((name, count), c) in model.component_params().iter().zip(&analytic.components) {
            if *name != c.name || *count != c.params {
                mismatches.push(format!("config {seed} {name}: {count} vs {}", c.params));
            }
        }
        let mut r = rng::stream(seed, "acceptance.lengths");
        let l_in = r.random_range(1..9);
        let l_out = r.random_range(l_in..25);
        let report = model_macs(&cfg, &MacsQuery::new(l_in, l_out)).unwrap();
        let (tokens, durations) = synthetic_inputs(cfg.phoneme_vocab, l_in, l_out).unwrap();
        for (stage, macs) in model.forward(&tokens, &durations).unwrap().1 {
            let expect = report.component(stage.component()).unwrap().macs;
            if macs != expect {
                mismatches.push(format!("config {seed} {stage:?}: {macs} vs {expect}"));
            }
        }
    }
    let dims = SlotDims {
        hidden: 16,
        ffn_filter: 24,
        ffn_kernel: 3,
        bias: true,
    };
    let x = random_tensor(&[11, 16], 5);
    for op in VOCABULARY {
        let inst = OpInstance::for_code(op, dims, &WeightInit::new(1), "op").unwrap();
        let mut counter = MacCounter::new();
        inst.forward(&x, &mut counter).unwrap();
        let expect = op_macs(CostOp::Slot(op), dims, 11);
        if counter.get() != expect || inst.param_count() as u64 != op_params(CostOp::Slot(op), dims) {
            mismatches.push(format!("{op}: {} MACs counted vs {expect}", counter.get()));
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "50 configs params and per-stage MACs exact; 11 ops MACs and params exact".into()
        } else {
            mismatches.join("; ")
        },
    )
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, "acceptance.tensor");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn kernels(seed: u64) -> Vec<(String, OpInstance, Tensor)> {
    let init = WeightInit::new(seed);
    let mut ln = LayerNorm::new(6);
    ln.gain = random_tensor(&[6], seed + 100);
    ln.bias = random_tensor(&[6], seed + 200);
    let mut out = vec![
        ("linear".to_string(), OpInstance::Linear(Linear::new(3, 5, true, &init, "l")), random_tensor(&[4, 3], seed)),
        ("layernorm".into(), OpInstance::LayerNorm(ln), random_tensor(&[5, 6], seed)),
        (
            "conv1d".into(),
            OpInstance::Conv1d(Conv1d::new(3, 4, 3, true, &init, "c").unwrap()),
            random_tensor(&[6, 4], seed),
        ),
        (
            "sepconv".into(),
            OpInstance::SepConv(SepConv::new(5, 4, 3, true, &init, "s").unwrap()),
            random_tensor(&[7, 4], seed),
        ),
        (
            "mhsa".into(),
            OpInstance::Mhsa(Mhsa::new(8, 2, true, &init, "a").unwrap()),
            random_tensor(&[5, 8], seed),
        ),
        (
            "ffn".into(),
            OpInstance::Ffn(Ffn::new(4, 8, 3, true, &init, "f").unwrap()),
            random_tensor(&[5, 4], seed),
        ),
    ];
    let dims = SlotDims {
        hidden: 8,
        ffn_filter: 12,
        ffn_kernel: 3,
        bias: true,
    };
    for op in VOCABULARY {
        out.push((
            op.to_string(),
            OpInstance::for_code(op, dims, &init, "slot").unwrap(),
            random_tensor(&[6, 8], seed + 300),
        ));
    }
    out
}

fn c6_gradients() -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut failures = Vec::new();
    for seed in 0..20 {
        for (name, op, x) in kernels(seed) {
            match grad_check(&op, &x, 1e-5) {
                Ok(err) => {
                    if err > worst.0 {
                        worst = (err, format!("{name} seed {seed}"));
                    }
                    if err >= 1e-4 {
                        failures.push(format!("{name} seed {seed}: {err:.2e}"));
                    }
                }
                Err(e) => failures.push(format!("{name} seed {seed}: {e}")),
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "17 kernels x 20 seeds; worst relative error {:.2e} ({}){}",
            worst.0,
            worst.1,
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    )
}

fn c7_gbdt() -> Outcome {
    let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
    let c = 0.1 + 0.2;
    let model = fit(&x, &[c; 5], &GbdtConfig::default()).unwrap();
    let constant = [-5.0, 0.5, 3.0, 1e9].iter().all(|&q| model.predict_row(&[q]).unwrap() == c);

    let xs = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0];
    let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
    let y: Vec<f64> = xs.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
    let one_tree = GbdtConfig {
        n_trees: 1,
        learning_rate: 1.0,
        ..GbdtConfig::default()
    };
    let (_, trace) = fit_traced(&x, &y, &one_tree).unwrap();
    let split_mse = trace[1];

    let space = SpaceDef::default();
    let mut r = rng::stream(11, "acceptance.planted");
    let weights: Vec<f64> = (0..space.feature_len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = sample_uniform(&space, 11, 1000)
        .iter()
        .map(|a| encode_onehot(a, &space).unwrap())
        .collect();
    let targets: Vec<f64> = rows.iter().map(|row| row.iter().zip(&weights).map(|(a, b)| a * b).sum()).collect();
    let (_, trace) = fit_traced(&rows, &targets, &GbdtConfig::default()).unwrap();
    let increases = trace.windows(2).filter(|w| w[1] > w[0]).count();
    outcome(
        constant && split_mse < 1e-12 && increases == 0 && trace.len() == 101,
        format!(
            "constant fit exact: {constant}; one-tree separable MSE {split_mse:.1e}; planted MSE {:.4} -> {:.4} over 100 rounds, {increases} increases",
            trace[0], trace[100]
        ),
    )
}

fn c8_reduced_exact() -> Outcome {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..10 {
        let cfg = SearchConfig {
            seed,
            ..search_config("search_reduced.json")
        };
        let dataset = cfg.dataset().unwrap();
        let (report, state) = run_gbdt_nas(&cfg, &dataset, &mut NoHooks).unwrap();
        let all = enumerate(&cfg.space, 0, 9).unwrap();
        let exhaustive = evaluate_batch(&state, &all, &dataset).unwrap();
        let argmin = exhaustive
            .iter()
            .reduce(|b, r| if r.val_loss < b.val_loss { r } else { b })
            .unwrap();
        if argmin.arch == report.best_arch && argmin.val_loss == report.best_val_loss {
            hits += 1;
        } else {
            misses.push(seed);
        }
    }
    outcome(hits == 10, format!("{hits}/10 seeds return the exhaustive argmin; misses {misses:?}"))
}

fn c9_search_quality() -> Outcome {
    let mut beats_initial = 0;
    let mut beats_random10 = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let cfg = SearchConfig {
            seed,
            ..search_config("search_default.json")
        };
        let dataset = cfg.dataset().unwrap();
        let (report, state) = run_gbdt_nas(&cfg, &dataset, &mut NoHooks).unwrap();
        let best_initial = report.initial.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        let oracle = SupernetOracle {
            state: &state,
            dataset: &dataset,
        };
        let random = random_search_with_oracle(&cfg.space, &oracle, 10, seed, &mut NoHooks).unwrap();
        beats_initial += usize::from(report.best_val_loss <= best_initial);
        beats_random10 += usize::from(random.mean_val_loss > report.best_val_loss);
        rows.push(format!(
            "seed {seed}: gbdt {:.4} best-of-1000 {best_initial:.4} mean-of-10 {:.4}",
            report.best_val_loss, random.mean_val_loss
        ));
    }
    for row in &rows {
        println!("    {row}");
    }
    outcome(
        beats_initial >= 8 && beats_random10 >= 8,
        format!("gbdt <= best-of-1000 in {beats_initial}/10 seeds; mean-of-10 random > gbdt in {beats_random10}/10"),
    )
}

fn c10_determinism() -> Outcome {
    let cfg = SearchConfig {
        seed: 4,
        ..search_config("search_reduced.json")
    };
    let run = || {
        let dataset = cfg.dataset().unwrap();
        let (report, _) = run_gbdt_nas(&cfg, &dataset, &mut CliHooks::new(1)).unwrap();
        report
    };
    let (a, b) = (run(), run());
    let timed = !a.timings.is_empty() && !b.timings.is_empty();
    let bytes_a = serde_json::to_vec(&a.without_timings()).unwrap();
    let bytes_b = serde_json::to_vec(&b.without_timings()).unwrap();
    outcome(
        timed && bytes_a == bytes_b,
        format!("{} report bytes, identical: {}", bytes_a.len(), bytes_a == bytes_b),
    )
}

#[test]
fn acceptance() {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        (1, "search-space cardinality", Duration::from_secs(1), c1_space_size),
        (2, "baseline parameter breakdown", Duration::from_secs(1), c2_table1_params),
        (3, "LightSpeech size and MACs bands", Duration::from_secs(1), c3_lightspeech_bands),
        (4, "RTF direction", Duration::from_secs(300), c4_rtf_direction),
        (5, "analytic vs instantiated counts", Duration::from_secs(60), c5_oracle_equivalence),
        (6, "gradient checks", Duration::from_secs(300), c6_gradients),
        (7, "GBDT correctness", Duration::from_secs(60), c7_gbdt),
        (8, "reduced-space search exactness", Duration::from_secs(600), c8_reduced_exact),
        (9, "search quality on the planted task", Duration::from_secs(3600), c9_search_quality),
        (10, "report determinism", Duration::from_secs(600), c10_determinism),
    ];
    let mut failed = Vec::new();
    for (id, title, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = result.pass && in_time;
        println!(
            "{} criterion {id}: {title}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
