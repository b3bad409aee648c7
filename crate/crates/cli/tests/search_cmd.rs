mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::*;

fn quick_config(dir: &Path, seed: u64) -> PathBuf {
    let mut cfg = read_json(&config("search_reduced.json"));
    cfg["train"]["steps"] = serde_json::json!(300);
    cfg["seed"] = serde_json::json!(seed);
    let path = dir.join(format!("search_{seed}.json"));
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn search(cfg: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["search", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn without_timings(mut v: serde_json::Value) -> serde_json::Value {
    v["timings"] = serde_json::json!([]);
    v
}

#[test]
fn reduced_search_matches_exhaustive_argmin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 3);
    let out = dir.path().join("run");
    let o = search(&cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed = stdout(&o).trim().to_string();

    let page = run(&["space", "--space", config("space_reduced.json").to_str().unwrap(), "--enumerate", "0", "9"]);
    let all: Vec<String> = stdout(&page).lines().map(String::from).collect();
    let mut args = vec!["eval", "--checkpoint", out.to_str().unwrap(), "--json", "--arch"];
    args.extend(all.iter().map(String::as_str));
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let records = json(&stdout(&o));
    let best = records
        .as_array()
        .unwrap()
        .iter()
        .min_by(|a, b| a["val_loss"].as_f64().unwrap().total_cmp(&b["val_loss"].as_f64().unwrap()))
        .unwrap();
    assert_eq!(best["arch"].as_str().unwrap(), printed);

    let report = read_json(&out.join("report.json"));
    assert_schema("search_report.schema.json", &report);
    assert_eq!(report["best_arch"].as_str().unwrap(), printed);
    assert_eq!(report["budget"]["supernet_evals"], 9);
    assert_eq!(report["best_val_loss"], best["val_loss"]);

    let manifest = read_json(&out.join("manifest.json"));
    assert_schema("run_manifest.schema.json", &manifest);
    assert_eq!(manifest["command"], "search");
    assert_eq!(manifest["seed"], 3);
    for p in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(p.as_str().unwrap()).is_file(), "{p}");
    }
    let log = fs::read_to_string(out.join("evals.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 9);
    for line in log.lines() {
        assert_schema("eval_record.schema.json", &json(line));
    }
}

#[test]
fn rerun_resumes_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 5);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&search(&cfg, &a, &[])), 0);
    let first = read_json(&a.join("report.json"));
    let log = fs::read_to_string(a.join("evals.jsonl")).unwrap();

    let o = search(&cfg, &a, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(without_timings(read_json(&a.join("report.json"))), without_timings(first.clone()));
    assert_eq!(fs::read_to_string(a.join("evals.jsonl")).unwrap(), log, "resume re-evaluated cached archs");

    let o = search(&cfg, &b, &["--workers", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(without_timings(read_json(&b.join("report.json"))), without_timings(first));
    assert_eq!(fs::read(a.join("supernet.bin")).unwrap(), fs::read(b.join("supernet.bin")).unwrap());
}

#[test]
fn partial_log_is_completed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 6);
    let out = dir.path().join("run");
    assert_eq!(code(&search(&cfg, &out, &[])), 0);
    let full = read_json(&out.join("report.json"));
    let log = fs::read_to_string(out.join("evals.jsonl")).unwrap();
    let head: String = log.lines().take(4).map(|l| format!("{l}\n")).collect();
    fs::write(out.join("evals.jsonl"), &head).unwrap();
    assert_eq!(code(&search(&cfg, &out, &[])), 0);
    assert_eq!(without_timings(read_json(&out.join("report.json"))), without_timings(full));
    assert_eq!(fs::read_to_string(out.join("evals.jsonl")).unwrap().lines().count(), 9);
}

#[test]
fn corrupted_log_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 7);
    let out = dir.path().join("run");
    assert_eq!(code(&search(&cfg, &out, &[])), 0);
    let log = fs::read_to_string(out.join("evals.jsonl")).unwrap();
    let mut lines: Vec<&str> = log.lines().collect();
    lines[2] = "{\"arch\": \"enc:[ffn];dec:[ffn]\", \"val_loss\": ";
    fs::write(out.join("evals.jsonl"), lines.join("\n")).unwrap();
    let o = search(&cfg, &out, &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn random_baseline_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path(), 8);
    let out = dir.path().join("run");
    let o = search(&cfg, &out, &["--baseline", "random", "--n", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = read_json(&out.join("random_report.json"));
    assert_schema("search_report.schema.json", &report);
    assert_eq!(report["method"], "random");
    assert_eq!(report["initial"].as_array().unwrap().len(), 4);
    assert_eq!(report["best_arch"].as_str().unwrap(), stdout(&o).trim());
    assert_schema("run_manifest.schema.json", &read_json(&out.join("random_manifest.json")));

    let o = search(&cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let gbdt = read_json(&out.join("report.json"));
    assert!(gbdt["best_val_loss"].as_f64().unwrap() <= report["best_val_loss"].as_f64().unwrap());

    let o = search(&cfg, &out, &["--seed", "9"]);
    assert_eq!(code(&o), 1, "a different seed must not reuse this directory");
    let o = search(&cfg, &dir.path().join("other"), &["--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("other/report.json"))["seed"], 9);
}

#[test]
fn search_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = search(Path::new("/nonexistent/search.json"), &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(!stderr(&o).is_empty());

    let mut cfg = read_json(&config("search_reduced.json"));
    cfg["top_k"] = serde_json::json!(50);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, cfg.to_string()).unwrap();
    assert_eq!(code(&search(&bad, &out, &[])), 2);

    let mut cfg = read_json(&config("search_reduced.json"));
    cfg["learning_rate"] = serde_json::json!(0.1);
    fs::write(&bad, cfg.to_string()).unwrap();
    let o = search(&bad, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"));

    let good = quick_config(dir.path(), 1);
    assert_eq!(code(&search(&good, &out, &["--baseline", "greedy"])), 2);
    assert_eq!(code(&run(&["search", "--config", good.to_str().unwrap()])), 2);
}

#[test]
fn eval_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--checkpoint", dir.path().to_str().unwrap(), "--arch", "enc:[ffn];dec:[ffn]"]);
    assert_eq!(code(&o), 1);

    let cfg = quick_config(dir.path(), 2);
    let out = dir.path().join("run");
    assert_eq!(code(&search(&cfg, &out, &[])), 0);
    let ck = out.to_str().unwrap();
    assert_eq!(code(&run(&["eval", "--checkpoint", ck, "--arch", "enc:[sep9];dec:[ffn]"])), 2);
    assert_eq!(code(&run(&["eval", "--checkpoint", ck, "--arch", "enc:[ffn,ffn];dec:[ffn]"])), 2);
    assert_eq!(code(&run(&["eval", "--checkpoint", ck])), 2);

    let eval_out = dir.path().join("eval");
    let o = run(&["eval", "--checkpoint", ck, "--arch", "enc:[ffn];dec:[sep5]", "--out", eval_out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    let (arch, loss) = line.trim().split_once('\t').unwrap();
    assert_eq!(arch, "enc:[ffn];dec:[sep5]");
    assert!(loss.parse::<f64>().unwrap() >= 0.0);
    let records = read_json(&eval_out.join("evals.json"));
    for r in records.as_array().unwrap() {
        assert_schema("eval_record.schema.json", r);
    }
    assert_schema("run_manifest.schema.json", &read_json(&eval_out.join("manifest.json")));

    let mut bin = fs::read(out.join("supernet.bin")).unwrap();
    let mid = bin.len() / 2;
    bin[mid] ^= 0x40;
    fs::write(out.join("supernet.bin"), bin).unwrap();
    let o = run(&["eval", "--checkpoint", ck, "--arch", "enc:[ffn];dec:[sep5]"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}
