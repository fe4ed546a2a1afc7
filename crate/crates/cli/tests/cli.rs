use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG_FLAGS: &[&str] = &[
    "--radius",
    "--width",
    "--tau",
    "--alpha",
    "--beta",
    "--tau-c",
    "--per-molecule-cap",
    "--degree-cap",
    "--train-frac",
    "--val-frac",
    "--test-frac",
    "--k",
    "--m",
    "--norm-percentile",
    "--lambda-base",
    "--gamma",
    "--s-min",
    "--s-max",
    "--ema-alpha",
    "--epsilon",
    "--epochs",
    "--batch-size",
    "--lr",
    "--objective",
    "--freeze-on-starvation",
    "--seed",
];

fn cliffkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cliffkit")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = cliffkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn help_lists_every_config_field() {
    for sub in ["split", "train", "eval", "diagnose"] {
        let out = ok(&[sub, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in CONFIG_FLAGS {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
        assert!(text.contains("[default: 0.3]") && text.contains("[default: 42]"));
    }
}

#[test]
fn full_flow_on_planted_data() {
    let dir = TempDir::new().unwrap();
    let input = p(&dir, "planted.csv");
    ok(&["synth", "--output", &input, "--n", "150", "--seed", "3"]);
    let split = p(&dir, "split.json");
    let summary = ok(&["split", "--input", &input, "--output", &split, "--pairs-out", &p(&dir, "pairs.tsv")]);
    let summary = String::from_utf8(summary.stdout).unwrap();
    assert!(summary.starts_with("train\tval\ttest\tcoverage_pct\ttest_test_edges"));
    assert_eq!(summary.lines().nth(1).unwrap().split('\t').nth(4), Some("0"));
    assert!(String::from_utf8(read(p(&dir, "pairs.tsv"))).unwrap().starts_with("i\tj\ts\tdy\tr\tc\n"));

    let model = p(&dir, "model.json");
    let trace = p(&dir, "trace.tsv");
    ok(&["train", "--input", &input, "--split", &split, "--model-out", &model, "--trace-out", &trace, "--epochs", "10"]);
    assert_eq!(String::from_utf8(read(&trace)).unwrap().lines().count(), 11);

    let preds = p(&dir, "preds.csv");
    let report = p(&dir, "report.json");
    ok(&[
        "eval", "--input", &input, "--split", &split, "--model", &model, "--predictions-out", &preds, "--output",
        &report,
    ]);
    let text = String::from_utf8(read(&report)).unwrap();
    for key in ["overall_mae", "group_mae", "severity_ratio", "pair_mae", "shift", "nearest_train_similarity"] {
        assert!(text.contains(key), "report lacks {key}");
    }
    let from_preds = p(&dir, "report2.json");
    ok(&["eval", "--input", &input, "--split", &split, "--predictions", &preds, "--output", &from_preds]);
    assert_eq!(read(&report), read(&from_preds));

    let tsv = p(&dir, "report.tsv");
    ok(&["eval", "--input", &input, "--split", &split, "--model", &model, "--output", &tsv, "--format", "tsv"]);
    assert!(String::from_utf8(read(&tsv)).unwrap().contains("overall_mae\t"));

    let diag = p(&dir, "diag.json");
    ok(&["diagnose", "--input", &input, "--split", &split, "--output", &diag]);
    let text = String::from_utf8(read(&diag)).unwrap();
    assert!(text.contains("\"test_test_edges\": 0"));
}

#[test]
fn outputs_are_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let input = data("planted_300.csv");
    let mut files = Vec::new();
    for (k, threads) in ["1", "4", "4"].iter().enumerate() {
        let split = p(&dir, &format!("split{k}.json"));
        let pairs = p(&dir, &format!("pairs{k}.tsv"));
        let trace = p(&dir, &format!("trace{k}.tsv"));
        let model = p(&dir, &format!("model{k}.json"));
        let report = p(&dir, &format!("report{k}.json"));
        ok(&["--threads", threads, "split", "--input", &input, "--output", &split, "--pairs-out", &pairs]);
        ok(&[
            "--threads", threads, "train", "--input", &input, "--split", &split, "--model-out", &model,
            "--trace-out", &trace,
        ]);
        ok(&["--threads", threads, "eval", "--input", &input, "--split", &split, "--model", &model, "--output", &report]);
        files.push([split, pairs, trace, model, report].map(read));
    }
    assert!(files.iter().all(|f| f == &files[0]));
}

#[test]
fn zero_base_weight_reproduces_the_base_trace() {
    let dir = TempDir::new().unwrap();
    let input = data("planted_300.csv");
    let split = p(&dir, "split.json");
    ok(&["split", "--input", &input, "--output", &split]);
    let run = |name: &str, extra: &[&str]| {
        let trace = p(&dir, &format!("{name}.tsv"));
        let model = p(&dir, &format!("{name}.json"));
        let mut args = vec!["train", "--input", &input, "--split", &split, "--model-out", &model, "--trace-out", &trace];
        args.extend_from_slice(extra);
        ok(&args);
        (read(trace), read(model))
    };
    let base = run("base", &["--objective", "base"]);
    let off = run("off", &["--objective", "cliff", "--lambda-base", "0"]);
    assert_eq!(base, off);
    let on = run("on", &[]);
    assert_ne!(base.0, on.0);
}

#[test]
fn smiles_input_is_supported() {
    let dir = TempDir::new().unwrap();
    let input = data("demo_smiles.csv");
    let split = p(&dir, "split.json");
    let fracs = ["--train-frac", "0.6", "--val-frac", "0.2", "--test-frac", "0.2"];
    let mut args = vec!["split", "--input", input.as_str(), "--output", split.as_str()];
    args.extend_from_slice(&fracs);
    ok(&args);
    ok(&["diagnose", "--input", &input, "--split", &split, "--output", &p(&dir, "d.tsv"), "--format", "tsv"]);
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = TempDir::new().unwrap();
    let missing = p(&dir, "missing.csv");
    let out = p(&dir, "out.json");
    assert_eq!(cliffkit(&["split", "--input", &missing, "--output", &out]).status.code(), Some(2));
    let input = data("planted_300.csv");
    assert_eq!(
        cliffkit(&["split", "--input", &input, "--output", &out, "--width", "1000"]).status.code(),
        Some(2)
    );
    assert_eq!(
        cliffkit(&["split", "--input", &input, "--output", &out, "--train-frac", "0.9"]).status.code(),
        Some(2)
    );

    // twenty identical fingerprints with distinct targets form a complete cliff graph
    let clique = p(&dir, "clique.csv");
    let mut text = String::from("id,fingerprint,target\n");
    for k in 0..20 {
        text.push_str(&format!("m{k:02},f0f0,{k}\n"));
    }
    fs::write(&clique, text).unwrap();
    let res = cliffkit(&["split", "--input", &clique, "--output", &out, "--tau-c", "1"]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("infeasible"));

    let bad = p(&dir, "bad.csv");
    fs::write(&bad, "id,fingerprint,target\na,f0,1\nb,f0,NaN\n").unwrap();
    let res = cliffkit(&["split", "--input", &bad, "--output", &out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));
}
