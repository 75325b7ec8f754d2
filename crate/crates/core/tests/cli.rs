use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_t2ibias");
const GROUND_TRUTH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ground_truth.demo.json");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn person(gender: [f64; 2], race_idx: usize, age_idx: usize) -> String {
    let mut race = [0.0; 5];
    race[race_idx] = 1.0;
    let mut age = [0.0; 3];
    age[age_idx] = 1.0;
    format!(
        r#"{{"gender":[{},{}],"race":{:?},"age":{:?}}}"#,
        gender[0], gender[1], race, age
    )
}

fn line(image: &str, prompt: &str, human_prob: f64, persons: &[String]) -> String {
    format!(
        r#"{{"image_id":"{image}","prompt_id":"{prompt}","human_prob":{human_prob},"persons":[{}]}}"#,
        persons.join(",")
    )
}

/// Four images per prompt; male-leaning for "beautiful", female-leaning for "ugly".
fn alignments(dir: &Path, shift: usize) -> PathBuf {
    let mut lines = Vec::new();
    for i in 0..4 {
        let r = (i + shift) % 5;
        lines.push(line(&format!("doc{i}"), "im-oc-doctor", 0.9, &[person([1.0, 0.0], r, i % 3)]));
        lines.push(line(&format!("b{i}"), "im-ch-beautiful", 0.9, &[person([0.8, 0.2], r, 0)]));
        lines.push(line(&format!("u{i}"), "im-ch-ugly", 0.9, &[person([0.3, 0.7], 0, 2)]));
        let g = if i < 3 { [1.0, 0.0] } else { [0.0, 1.0] };
        lines.push(line(&format!("ex{i}"), "ex-oc-doctor-gender-male", 0.9, &[person(g, r, 1)]));
    }
    lines.push(line("noise", "im-oc-doctor", 0.1, &[person([0.5, 0.5], 0, 0)]));
    let path = dir.join(format!("align{shift}.jsonl"));
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn compile_emits_default_prompt_set() {
    let text = stdout(&run(&["compile"]));
    assert_eq!(text.lines().count(), 1210);
    assert!(text.contains(r#""id":"im-oc-doctor""#));
}

#[test]
fn score_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let a = alignments(dir.path(), 0);
    let json = stdout(&run(&[
        "score",
        "--alignments",
        a.to_str().unwrap(),
        "--ground-truth",
        GROUND_TRUTH,
        "--model",
        "demo",
    ]));
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["model_name"], "demo");
    assert_eq!(report["hallucinations"]["kept"], 16);
    assert_eq!(report["hallucinations"]["hallucinated"], 1);
    // Three of four explicit images match the male target.
    let explicit = report["explicit"]["tree"]["value"].as_f64().unwrap();
    assert!((explicit - 0.75).abs() < 1e-12, "{explicit}");

    let out_csv = dir.path().join("report.csv");
    stdout(&run(&[
        "score",
        "--alignments",
        a.to_str().unwrap(),
        "--ground-truth",
        GROUND_TRUTH,
        "--model",
        "demo",
        "--format",
        "csv",
        "--out",
        out_csv.to_str().unwrap(),
    ]));
    let csv = fs::read_to_string(&out_csv).unwrap();
    assert!(csv.starts_with("table,meta\n"));
    assert!(csv.contains("table,explicit.model\n"));
    assert!(csv.contains("table,eta\n"));
}

#[test]
fn eta_reports_log_that_replays() {
    let dir = TempDir::new().unwrap();
    let a = alignments(dir.path(), 0);
    let text = stdout(&run(&["eta", "--alignments", a.to_str().unwrap(), "--ground-truth", GROUND_TRUTH]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let states = v["states"].as_array().unwrap();
    assert!(!states.is_empty());
    for s in states {
        let eta = s["eta"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&eta));
        assert!(!s["log"].as_array().unwrap().is_empty());
    }
    assert!(v["summary"]["sum"].is_number());

    let prompts = dir.path().join("prompts.jsonl");
    fs::write(&prompts, stdout(&run(&["compile"]))).unwrap();
    let out = run(&[
        "eta",
        "--alignments",
        a.to_str().unwrap(),
        "--ground-truth",
        GROUND_TRUTH,
        "--prompts",
        prompts.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_human_modes() {
    let dir = TempDir::new().unwrap();
    let m = alignments(dir.path(), 0);
    let h = alignments(dir.path(), 1);
    let args = ["compare-human", "--machine", m.to_str().unwrap(), "--human", h.to_str().unwrap()];
    let v: serde_json::Value = serde_json::from_str(&stdout(&run(&args))).unwrap();
    assert_eq!(v["mode"], "proportions");
    assert_eq!(v["prompts"].as_array().unwrap().len(), 4);

    let same: serde_json::Value = serde_json::from_str(&stdout(&run(&[
        "compare-human",
        "--machine",
        m.to_str().unwrap(),
        "--human",
        m.to_str().unwrap(),
    ])))
    .unwrap();
    assert_eq!(same["average"], 0.0);

    let scores = run(&[args.as_slice(), &["--mode", "scores"]].concat());
    assert_eq!(scores.status.code(), Some(1), "scores mode needs ground truth");
    let scores = stdout(&run(&[args.as_slice(), &["--mode", "scores", "--ground-truth", GROUND_TRUTH]].concat()));
    assert!(scores.contains(r#""mode": "scores""#));
}

#[test]
fn plot_data_writes_series() {
    let dir = TempDir::new().unwrap();
    let mut reports = Vec::new();
    for (shift, name) in [(0, "A"), (2, "B")] {
        let a = alignments(dir.path(), shift);
        let path = dir.path().join(format!("{name}.json"));
        stdout(&run(&[
            "score",
            "--alignments",
            a.to_str().unwrap(),
            "--ground-truth",
            GROUND_TRUTH,
            "--model",
            name,
            "--out",
            path.to_str().unwrap(),
        ]));
        reports.push(path);
    }
    let out_dir = dir.path().join("plots");
    stdout(&run(&[
        "plot-data",
        "--report",
        reports[0].to_str().unwrap(),
        "--report",
        reports[1].to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    for name in [
        "implicit_protected.csv",
        "implicit_acquired.csv",
        "explicit_protected.csv",
        "explicit_acquired.csv",
        "manifestation.csv",
    ] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(text.lines().next().unwrap().ends_with(",A,B"), "{name}: {text}");
    }
}

#[test]
fn defaults_round_trip_as_json() {
    for what in ["taxonomy", "postprocess", "weights", "eta"] {
        let text = stdout(&run(&["defaults", what]));
        serde_json::from_str::<serde_json::Value>(&text).unwrap();
    }
    let dir = TempDir::new().unwrap();
    let tax = dir.path().join("taxonomy.json");
    fs::write(&tax, stdout(&run(&["defaults", "taxonomy"]))).unwrap();
    let a = stdout(&run(&["compile", "--taxonomy", tax.to_str().unwrap()]));
    assert_eq!(a, stdout(&run(&["compile"])));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = run(&["score", "--alignments", missing.to_str().unwrap(), "--ground-truth", GROUND_TRUTH]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, line("x", "im-oc-doctor", 0.9, &[r#"{"gender":[0.7,0.7]}"#.to_string()]) + "\n").unwrap();
    let out = run(&["score", "--alignments", bad.to_str().unwrap(), "--ground-truth", GROUND_TRUTH]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let unknown = dir.path().join("unknown.jsonl");
    fs::write(&unknown, line("x", "no-such-prompt", 0.9, &[person([1.0, 0.0], 0, 0)]) + "\n").unwrap();
    let out = run(&["score", "--alignments", unknown.to_str().unwrap(), "--ground-truth", GROUND_TRUTH]);
    assert_eq!(out.status.code(), Some(1));
}
