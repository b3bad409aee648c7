//! Wall-clock profiling of the inference forward pass.

use std::time::Instant;

use lightspeech_core::costmodel::{model_macs, CostBreakdown, MacsQuery, ModelConfig, ProfileInfo};
use lightspeech_core::model::{synthetic_inputs, ForwardState, TtsModel};
use lightspeech_core::kernels::MacCounter;

use crate::error::{CliError, CliResult};

const WARMUP: usize = 1;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Cost breakdown with each component's median single-thread real-time factor filled in.
pub fn profile(config: &ModelConfig, query: &MacsQuery, repetitions: usize) -> CliResult<CostBreakdown> {
    if repetitions == 0 {
        return Err(CliError::usage("--profile needs at least one repetition"));
    }
    let mut report = model_macs(config, query)?;
    let model = TtsModel::new(config, 0)?;
    let (tokens, durations) = synthetic_inputs(config.phoneme_vocab, query.input_length, query.output_length).map_err(CliError::usage)?;
    let stages = model.stages();
    let mut samples = vec![Vec::with_capacity(repetitions); stages.len()];
    for rep in 0..WARMUP + repetitions {
        let mut state = ForwardState::new(tokens.clone(), durations.clone());
        for (i, &stage) in stages.iter().enumerate() {
            let mut macs = MacCounter::new();
            let t = Instant::now();
            model.run_stage(stage, &mut state, &mut macs)?;
            let elapsed = t.elapsed().as_secs_f64();
            if rep >= WARMUP {
                samples[i].push(elapsed);
            }
        }
        std::hint::black_box(&state.hidden);
    }
    let audio = query.audio_seconds();
    for (stage, mut times) in stages.into_iter().zip(samples) {
        let rtf = median(&mut times) / audio;
        if let Some(c) = report.component_mut(stage.component()) {
            *c.rtf.get_or_insert(0.0) += rtf;
        }
    }
    report.refresh_totals();
    report.profile = Some(ProfileInfo {
        repetitions,
        statistic: "median".into(),
        threads: 1,
        audio_seconds: audio,
    });
    Ok(report)
}
