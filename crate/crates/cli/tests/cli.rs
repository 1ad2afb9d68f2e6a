use std::path::Path;
use std::process::{Command, Output};

fn seal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seal"))
        .args(args)
        .current_dir(dir)
        .env("SEAL_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn seal")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = seal(args, dir);
    assert!(
        out.status.success(),
        "seal {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn eval_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = seal(&["eval", "--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn missing_data_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = seal(&["train", "--task", "binary", "--lambda", "0", "--out", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--data"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn invalid_flag_value_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = seal(&["gen", "--task", "X", "--n", "100", "--pos-frac", "1.5", "--out", "d.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("d.jsonl").exists());
}

#[test]
fn malformed_data_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{\"smiles\": \"C1CC\", \"label\": 1}\n").unwrap();
    let out = seal(&["fragment", "--data", "bad.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("junk.jsonl"), "not json\n").unwrap();
    let out = seal(
        &["train", "--data", "junk.jsonl", "--task", "binary", "--lambda", "0", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1"), "{err}");
}

#[test]
fn fragment_json_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["fragment", "--smiles", "Clc1ccccc1"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["smiles"], "Clc1ccccc1");
    assert_eq!(v["n_fragments"], 2);
    assert_eq!(v["fragment_of"], serde_json::json!([0, 1, 1, 1, 1, 1, 1]));
    assert_eq!(v["cut_bonds"], serde_json::json!([[0, 1]]));
}

fn pipeline(dir: &Path) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    ok(&["gen", "--task", "X", "--n", "80", "--seed", "3", "--out", "data.jsonl"], dir);
    let cv = ok(
        &[
            "train", "--data", "data.jsonl", "--task", "binary", "--lambda-sweep", "0.1,0",
            "--folds", "2", "--hidden", "16", "--epochs", "8", "--warmup", "2", "--seed", "3",
            "--out", "model.json",
        ],
        dir,
    );
    ok(&["explain", "--model", "model.json", "--data", "data.jsonl", "--out", "expl.jsonl"], dir);
    ok(
        &["eval", "--model", "model.json", "--data", "data.jsonl", "--out", "report.json", "--csv", "rows.csv"],
        dir,
    );
    let report = std::fs::read(dir.join("report.json")).unwrap();
    let expl = std::fs::read(dir.join("expl.jsonl")).unwrap();
    (cv.stdout, expl, report)
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    assert_eq!(ra.0, rb.0, "cv reports differ");
    assert_eq!(ra.1, rb.1, "explanations differ");
    assert_eq!(ra.2, rb.2, "eval reports differ");
    assert_eq!(
        std::fs::read(a.path().join("model.json")).unwrap(),
        std::fs::read(b.path().join("model.json")).unwrap()
    );

    let report: serde_json::Value = serde_json::from_slice(&ra.2).unwrap();
    assert_eq!(report["n_molecules"], 80);
    let cv: serde_json::Value = serde_json::from_slice(&ra.0).unwrap();
    assert_eq!(cv["n_folds"], 2);

    for artifact in ["data.jsonl", "model.json", "expl.jsonl", "report.json"] {
        let m: serde_json::Value =
            serde_json::from_slice(&std::fs::read(a.path().join(format!("{artifact}.manifest.json"))).unwrap())
                .unwrap();
        assert_eq!(m["format_version"], 1);
        assert!(m["flags"].is_object());
        assert!(m["started_unix_ms"].as_u64().unwrap() <= m["finished_unix_ms"].as_u64().unwrap());
    }
    let csv = std::fs::read_to_string(a.path().join("rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 81);

    // render the first explanation twice; output is valid-looking SVG and stable
    ok(&["render", "--input", "expl.jsonl", "--index", "1", "--out", "m1.svg"], a.path());
    ok(&["render", "--input", "expl.jsonl", "--index", "1", "--out", "m2.svg"], a.path());
    let s1 = std::fs::read_to_string(a.path().join("m1.svg")).unwrap();
    assert_eq!(s1, std::fs::read_to_string(a.path().join("m2.svg")).unwrap());
    assert!(s1.starts_with("<?xml") && s1.trim_end().ends_with("</svg>"));
}

#[test]
fn render_out_of_range_index() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.jsonl"), "").unwrap();
    let out = seal(&["render", "--input", "e.jsonl", "--index", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
