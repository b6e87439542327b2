use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--set",
    "lm.epochs=25",
    "--set",
    "lm.embedding_dim=8",
    "--set",
    "lm.hidden_dim=16",
    "--set",
    "lm.learning_rate=0.02",
    "--set",
    "ensemble.members=5",
    "--set",
    "ensemble.hidden_layers=8",
    "--set",
    "ensemble.epochs=20",
    "--set",
    "seed=3",
];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensorseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// synth, then every stage by hand, then evaluate.
fn staged_run(root: &Path) -> Vec<Vec<u8>> {
    let data = root.join("data");
    let work = root.join("work");
    ok(&["synth", "--scheme", "standard", "--count", "80", "--out", p(&data), "--seed", "5"]);
    let names = data.join("names.txt");
    let gt = data.join("gt.jsonl");
    let stage = |cmd: &str, with_names: bool| {
        let mut args = vec![cmd, "--work", p(&work)];
        if with_names {
            args.extend(["--names", p(&names)]);
        }
        args.extend(SMALL);
        ok(&args);
    };
    stage("train-lm", true);
    stage("probe", true);
    stage("thresholds", false);
    stage("pseudo-labels", false);
    stage("train-ensemble", false);
    let mut outputs = Vec::new();
    for variant in ["full", "fw"] {
        let out = work.join(format!("{variant}.jsonl"));
        ok(&["segment", "--variant", variant, "--names", p(&names), "--work", p(&work), "--out", p(&out)]);
        outputs.push(fs::read(&out).unwrap());
        outputs.push(fs::read(work.join(format!("{variant}.jsonl.meta.json"))).unwrap());
        let metrics = ok(&["evaluate", "--pred", p(&out), "--gt", p(&gt)]);
        let v: serde_json::Value = serde_json::from_str(&metrics).unwrap();
        assert!(v["f1"].as_f64().unwrap() >= 0.0);
        outputs.push(metrics.into_bytes());
    }
    let meta: serde_json::Value =
        serde_json::from_slice(&fs::read(work.join("fw.ensemble.bin.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["details"]["members"], 5, "expected a fitted ensemble: {meta}");
    let pretty = ok(&["segment", "--variant", "full", "--names", p(&names), "--work", p(&work), "--pretty"]);
    assert_eq!(pretty.lines().count(), 80);
    outputs.push(pretty.into_bytes());
    outputs.push(fs::read(work.join("fw.ensemble.bin")).unwrap());
    outputs.push(fs::read(work.join("fw.lm.bin")).unwrap());
    outputs
}

#[test]
fn two_staged_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(staged_run(a.path()), staged_run(b.path()));
}

#[test]
fn synth_without_out_is_a_usage_error() {
    assert_eq!(bin(&["synth", "--scheme", "standard", "--count", "10"]).status.code(), Some(2));
}

#[test]
fn synth_accepts_tags_and_scheme_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ph");
    ok(&["synth", "--scheme", "prefix-heavy", "--count", "12", "--out", p(&out)]);
    assert_eq!(fs::read_to_string(out.join("names.txt")).unwrap().lines().count(), 12);
    assert_eq!(fs::read_to_string(out.join("gt.jsonl")).unwrap().lines().count(), 12);

    let scheme = dir.path().join("scheme.txt");
    fs::write(&scheme, "seed = 2\nslots = a, b\na.pool = X#, Y#\na.delimiter = -\nb.pool = TEMP, FLOW\n").unwrap();
    let out = dir.path().join("custom");
    ok(&["synth", "--scheme", p(&scheme), "--count", "5", "--out", p(&out)]);
    for line in fs::read_to_string(out.join("names.txt")).unwrap().lines() {
        assert!(line.contains('-'), "{line}");
    }

    let bad = bin(&["synth", "--scheme", "no-such-tag", "--count", "5", "--out", p(&out)]);
    assert_ne!(bad.status.code(), Some(0));
    assert!(!bad.stderr.is_empty());
}

#[test]
fn preconditions_and_mismatches_have_their_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let work = dir.path().join("work");
    ok(&["synth", "--scheme", "standard", "--count", "30", "--out", p(&data)]);
    let names = data.join("names.txt");
    let gt = data.join("gt.jsonl");
    let tiny = ["--set", "lm.epochs=1", "--set", "lm.hidden_dim=4", "--set", "lm.embedding_dim=2"];
    let mut args = vec!["train-lm", "--names", p(&names), "--work", p(&work)];
    args.extend(tiny);
    ok(&args);
    ok(&["probe", "--names", p(&names), "--work", p(&work)]);

    // grid search is supervised
    let gs = bin(&["gridsearch", "--names", p(&names), "--work", p(&work)]);
    assert_eq!(gs.status.code(), Some(2));
    let gs = ok(&["gridsearch", "--names", p(&names), "--work", p(&work), "--gt", p(&gt)]);
    assert!(serde_json::from_str::<serde_json::Value>(&gs).unwrap()["threshold"].is_number());

    // the self-supervised path takes no labels at all
    let seg = bin(&["segment", "--variant", "fw", "--names", p(&names), "--work", p(&work), "--gt", p(&gt)]);
    assert_eq!(seg.status.code(), Some(2));

    // no backward model yet
    ok(&["thresholds", "--work", p(&work)]);
    let bw = bin(&["segment", "--variant", "bw", "--names", p(&names), "--work", p(&work)]);
    assert_eq!(bw.status.code(), Some(2));

    // changing the names after probing makes the dump stale
    ok(&["segment", "--variant", "fw", "--names", p(&names), "--work", p(&work)]);
    let text = fs::read_to_string(&names).unwrap();
    fs::write(&names, text.replacen('\n', "\nEXTRA.NAME\n", 1)).unwrap();
    let stale = bin(&["gridsearch", "--names", p(&names), "--work", p(&work), "--gt", p(&gt)]);
    assert_eq!(stale.status.code(), Some(3));

    // a hand-edited artifact no longer matches its sidecar
    fs::write(work.join("fw.thresholds.json"), "{}").unwrap();
    let edited = bin(&["pseudo-labels", "--work", p(&work)]);
    assert_eq!(edited.status.code(), Some(3));

    let bad_key = bin(&["baseline", "--names", p(&names), "--set", "nope=1"]);
    assert_eq!(bad_key.status.code(), Some(2));
}

#[test]
fn baseline_prints_jsonl_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let names = dir.path().join("names.txt");
    fs::write(&names, "SDH.AH1_TEMP\nBLD.VAV2_FLOW\n").unwrap();
    let out = ok(&["baseline", "--names", p(&names)]);
    let first: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["segments"], serde_json::json!(["SDH", ".", "AH1", "_", "TEMP"]));
}
