//! Plain-text tables.

use std::fmt::Write;

use lightspeech_core::costmodel::{CostBreakdown, Totals};

fn millions(n: u64) -> String {
    format!("{:.2}M", n as f64 / 1e6)
}

fn giga(n: u64) -> String {
    format!("{:.2}G", n as f64 / 1e9)
}

fn rtf(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |r| format!("{r:.3e}"))
}

/// Per-component table with both totals and the convention notes.
pub fn cost_table(report: &CostBreakdown) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", report.model);
    if let Some(q) = &report.query {
        let _ = writeln!(
            s,
            "lengths: input {} / output {} frames ({:.3} s audio)",
            q.input_length,
            q.output_length,
            q.audio_seconds()
        );
    }
    let _ = writeln!(s, "{:<22} {:>12} {:>9} {:>14} {:>8} {:>11}", "component", "params", "", "MACs", "", "RTF");
    for c in &report.components {
        let name = if c.auxiliary { format!("{} (aux)", c.name) } else { c.name.clone() };
        let _ = writeln!(
            s,
            "{:<22} {:>12} {:>9} {:>14} {:>8} {:>11}",
            name,
            c.params,
            millions(c.params),
            c.macs,
            giga(c.macs),
            rtf(c.rtf)
        );
    }
    let total = |s: &mut String, label: &str, t: &Totals| {
        let _ = writeln!(
            s,
            "{:<22} {:>12} {:>9} {:>14} {:>8} {:>11}",
            label,
            t.params,
            millions(t.params),
            t.macs,
            giga(t.macs),
            rtf(t.rtf)
        );
    };
    total(&mut s, "total (core)", &report.totals.core);
    total(&mut s, "total (with-auxiliaries)", &report.totals.with_auxiliaries);
    let _ = writeln!(
        s,
        "pitch/energy predictors at {} level; other level gives {} core MACs ({})",
        report.totals.pitch_level,
        report.totals.macs_alternate_pitch_level,
        giga(report.totals.macs_alternate_pitch_level)
    );
    if let Some(p) = &report.profile {
        let _ = writeln!(
            s,
            "RTF: {} of {} runs, {} thread(s), seconds of compute per second of audio",
            p.statistic, p.repetitions, p.threads
        );
    }
    let _ = writeln!(s, "conventions:");
    for c in &report.conventions {
        let _ = writeln!(s, "  - {c}");
    }
    s
}

/// Side-by-side comparison; ratios are relative to the last (smallest) model.
pub fn comparison_table(reports: &[CostBreakdown]) -> String {
    let mut s = String::new();
    let Some(reference) = reports.last() else {
        return s;
    };
    let _ = writeln!(
        s,
        "{:<18} {:>12} {:>18} {:>10} {:>10} {:>11} {:>9}",
        "model", "params core", "params with-aux", "MACs", "params ×", "MACs ×", "RTF"
    );
    let ratio = |a: u64, b: u64| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    for r in reports {
        let _ = writeln!(
            s,
            "{:<18} {:>12} {:>18} {:>10} {:>10.1} {:>11.1} {:>9}",
            r.model,
            millions(r.totals.core.params),
            millions(r.totals.with_auxiliaries.params),
            giga(r.totals.core.macs),
            ratio(r.totals.with_auxiliaries.params, reference.totals.with_auxiliaries.params),
            ratio(r.totals.core.macs, reference.totals.core.macs),
            rtf(r.totals.core.rtf)
        );
    }
    if let Some(q) = &reference.query {
        let _ = writeln!(s, "MACs at input {} / output {} frames", q.input_length, q.output_length);
    }
    let _ = writeln!(s, "conventions:");
    for c in &reference.conventions {
        let _ = writeln!(s, "  - {c}");
    }
    s
}
