use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pprl::config::RunConfig;
use pprl::data::{generate_synthetic, load_dataset, load_pairs};
use pprl::pipeline::synthesize;
use serde_json::Value;

const SMALL: &str = r#"{
    "data": {"num_records": 200, "training_pairs": 200},
    "ablation": {"p_values": [0.01, 0.05, 0.1], "k_values": [], "party_counts": []}
}"#;

fn pprl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pprl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(config: &Path, out: &Path, extra: &[&str], command: &str) -> Value {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    args.push(command);
    let output = pprl(&args);
    assert!(
        output.status.success(),
        "{command} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("summary is JSON")
}

fn run_pipeline(config: &Path, out: &Path, extra: &[&str]) -> BTreeMap<String, Value> {
    ["synth", "encode", "train", "link", "evaluate"]
        .iter()
        .map(|c| (c.to_string(), run_ok(config, out, extra, c)))
        .collect()
}

fn artifacts(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

#[test]
fn help_lists_every_flag_and_command() {
    let out = pprl(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["--config", "--out", "--seed", "--threads", "synth", "encode", "train", "link", "evaluate", "attack", "ablate"] {
        assert!(text.contains(word), "help lacks {word}");
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let summaries = run_pipeline(&config, &out, &[]);

    let encode = &summaries["encode"];
    let privacy = &encode["privacy"];
    assert_eq!(privacy["p"], 0.01);
    assert_eq!(privacy["k"], 10);
    assert!(privacy["n"].as_u64().unwrap() > 0);
    assert!(privacy["epsilon"].as_f64().unwrap() > 0.0);
    for s in summaries.values() {
        assert!(s["timings"].is_object());
    }
    assert_eq!(summaries["train"]["dims"], serde_json::json!([15, 21, 42, 84, 1]));

    let eval = &summaries["evaluate"];
    let f = eval["dl"]["f_measure"].as_f64().unwrap();
    assert!(f > 0.5, "dl F = {f}");
    let files = artifacts(&out);
    for name in [
        "data/party1.csv",
        "data/truth_party1_party2.csv",
        "encoded/party2.csv",
        "models/global.json",
        "models/local_party1.json",
        "links/dl_party1_party2.csv",
        "links/baseline_party1_party2.csv",
        "reports/evaluate.json",
    ] {
        assert!(files.contains_key(Path::new(name)), "missing {name}");
    }
    let encoded = String::from_utf8_lossy(&files[Path::new("encoded/party1.csv")]).into_owned();
    assert!(encoded.starts_with("# fingerprint="));
}

#[test]
fn synth_output_reloads_as_generated() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", r#"{"data": {"num_records": 50}, "parties": {"count": 3}}"#);
    let out = dir.path().join("out");
    let summary = run_ok(&config, &out, &[], "synth");
    // 3 datasets, 3 truth files, 3 training record files and 3 training pair files
    assert_eq!(summary["files"].as_array().unwrap().len(), 12);

    let cfg = RunConfig::load(&config).unwrap();
    let expected = generate_synthetic(&cfg.synth_spec(), 3).unwrap();
    for (p, d) in expected.datasets.iter().enumerate() {
        let loaded = load_dataset(out.join(format!("data/party{}.csv", p + 1)), &d.schema).unwrap();
        assert_eq!(loaded.records, d.records);
    }
    let truth = load_pairs(out.join("data/truth_party2_party3.csv")).unwrap();
    assert_eq!(truth, expected.truth_for(1, 2).unwrap().pairs);
    assert_eq!(synthesize(&cfg).unwrap().linkage, expected);
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", SMALL);
    let (one, two, many) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_pipeline(&config, &one, &["--threads", "1"]);
    run_pipeline(&config, &two, &["--threads", "1"]);
    run_pipeline(&config, &many, &["--threads", "4"]);
    let first = artifacts(&one);
    assert!(first.len() >= 14);
    assert_eq!(first, artifacts(&two));
    assert_eq!(first, artifacts(&many));

    let other_seed = dir.path().join("d");
    run_pipeline(&config, &other_seed, &["--seed", "7"]);
    assert_ne!(first[Path::new("data/party1.csv")], artifacts(&other_seed)[Path::new("data/party1.csv")]);
}

#[test]
fn mismatched_fingerprint_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    run_pipeline(&config, &out, &[]);

    let changed = write_config(
        dir.path(),
        "k20.json",
        r#"{"data": {"num_records": 200, "training_pairs": 200}, "encoding": {"k": 20}}"#,
    );
    for command in ["link", "evaluate"] {
        let output = pprl(&["--config", changed.to_str().unwrap(), "--out", out.to_str().unwrap(), command]);
        assert_eq!(output.status.code(), Some(2), "{command}");
        assert!(String::from_utf8_lossy(&output.stderr).contains("config fingerprint mismatch"));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let out = out.to_str().unwrap();
    for command in ["encode", "train", "link", "evaluate"] {
        assert_eq!(pprl(&["--out", out, command]).status.code(), Some(3), "{command}");
    }
    let bad = write_config(dir.path(), "bad.json", r#"{"encoding": {"q": 0}}"#);
    assert_eq!(pprl(&["--config", bad.to_str().unwrap(), "synth"]).status.code(), Some(2));
    let unknown = write_config(dir.path(), "unknown.json", r#"{"colour": "blue"}"#);
    assert_eq!(pprl(&["--config", unknown.to_str().unwrap(), "synth"]).status.code(), Some(2));
    assert_eq!(pprl(&["--config", "/nonexistent/config.json", "synth"]).status.code(), Some(2));
    assert_eq!(pprl(&["--threads", "0", "--out", out, "synth"]).status.code(), Some(2));

    // a truncated model file is a data error
    let full = dir.path().join("full");
    let config = write_config(dir.path(), "c.json", SMALL);
    for c in ["synth", "encode", "train"] {
        run_ok(&config, &full, &[], c);
    }
    let model = full.join("models/global.json");
    let text = fs::read_to_string(&model).unwrap();
    fs::write(&model, &text[..text.len() / 2]).unwrap();
    let output = pprl(&["--config", config.to_str().unwrap(), "--out", full.to_str().unwrap(), "link"]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn attack_on_generated_and_explicit_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let clean = write_config(dir.path(), "clean.json", r#"{"dp": {"mechanism": "none"}, "attack": {"top_k": [1, 10]}}"#);
    let out = dir.path().join("out");
    let summary = run_ok(&clean, &out, &[], "attack");
    let reports = summary["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["pct_1to1_correct"], 100.0);
    for r in reports {
        let total: f64 = ["pct_1to1_correct", "pct_1tom_correct", "pct_wrong", "pct_no_guess"]
            .iter()
            .map(|k| r[k].as_f64().unwrap())
            .sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    let attack = out.join("attack");
    let path = |name: &str| attack.join(name).to_str().unwrap().to_owned();
    let (encoded, source, public) = (path("encoded.csv"), path("target.csv"), path("public.csv"));
    let explicit = pprl(&[
        "--config", clean.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "attack", "--encoded", &encoded, "--source", &source, "--public", &public,
    ]);
    assert!(explicit.status.success());
    let again: Value = serde_json::from_slice(&explicit.stdout).unwrap();
    assert_eq!(again["reports"], summary["reports"]);

    let partial = pprl(&["--out", out.to_str().unwrap(), "attack", "--encoded", &encoded]);
    assert_eq!(partial.status.code(), Some(2));
}

#[test]
fn ablation_over_flip_probability() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("out");
    let summary = run_ok(&config, &out, &[], "ablate");
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let f = |i: usize| rows[i]["f_measure"].as_f64().unwrap();
    assert!(f(2) <= f(0) + 0.02, "F(p=0.1) = {} vs F(p=0.01) = {}", f(2), f(0));
    let csv = fs::read_to_string(out.join("reports/ablation.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep,value,epsilon,precision,recall,f_measure,f_star,baseline_f_measure,runtime_seconds"
    );
    assert_eq!(lines.count(), 3);
}
