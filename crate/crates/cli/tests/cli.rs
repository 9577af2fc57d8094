use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nsm_core::dataset::{self, DatasetEntry};
use serde_json::Value;

fn nsm(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsm"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("nsm runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SYNTHETIC: &str = r#"
[[backend]]
name = "gen"
kind = "generator"
provider = "synthetic"
seed = 5

[[backend]]
name = "grader"
kind = "scorer"
provider = "synthetic"
seed = 9
"#;

#[test]
fn legality_all_prime_file_scores_ten() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.txt"), "I know something\nyou want this\n").unwrap();
    let out = nsm(dir.path(), &["legality", "--word", "rough", "--explication-file", "e.txt"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("score 10.0"), "{}", stdout(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("legality-report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["legality_score"], 10.0);
    assert_eq!(report["config"]["alpha"], 10.0);
    assert_eq!(report["config"]["k"], 2);
}

#[test]
fn conflicting_flags_are_named_and_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = nsm(
        dir.path(),
        &["legality", "--word", "x", "--explication-file", "e.txt", "--explication", "I know"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("--explication-file") && err.contains("--explication <TEXT>"), "{err}");

    let out = nsm(dir.path(), &["dataset", "split", "--input", "a", "--train", "b", "--validation", "c", "--val-count", "2", "--val-fraction", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("--val-count") && err.contains("--val-fraction"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nsm(dir.path(), &["legality", "--word", "x", "--explication", "I", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--frobnicate"));
}

#[test]
fn help_lists_defaults() {
    let out = nsm(Path::new("."), &["score", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let help = stdout(&out);
    for needle in [
        "[default: 2]",
        "[default: 10]",
        "[default: 40]",
        "[default: 35]",
        "[default: alz,rw,dz,din,ab]",
        "--jobs",
        "--record",
    ] {
        assert!(help.contains(needle), "missing {needle} in\n{help}");
    }
}

#[test]
fn backend_commands_require_backends() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.txt"), "One. Two. The <UNK> sat.\n").unwrap();
    let out = nsm(dir.path(), &["score", "--word", "cat", "--explication", "I know", "--passages", "p.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--backends"), "{}", stderr(&out));
}

#[test]
fn invalid_passage_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.toml"), SYNTHETIC).unwrap();
    fs::write(dir.path().join("p.txt"), "No mask here. None at all. Really.\n").unwrap();
    let out = nsm(
        dir.path(),
        &["--backends", "b.toml", "score", "--word", "cat", "--explication", "I know", "--passages", "p.txt"],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn mock_miss_is_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), r#"{"contract":"word_scorer","entries":{}}"#).unwrap();
    fs::write(
        dir.path().join("b.toml"),
        "[[backend]]\nname = \"g\"\nkind = \"scorer\"\nprovider = \"mock\"\nmock_table = \"empty.json\"\n",
    )
    .unwrap();
    fs::write(dir.path().join("p.txt"), "One here. Two here. The <UNK> sat.\n").unwrap();
    let out = nsm(
        dir.path(),
        &["--backends", "b.toml", "score", "--word", "cat", "--explication", "I know", "--passages", "p.txt"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("no entry"), "{}", stderr(&out));
}

#[test]
fn score_then_replay_from_recording_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("b.toml"), SYNTHETIC).unwrap();
    fs::write(
        d.join("p.txt"),
        "She looked up. The <UNK> was dark. Rain began. Everyone ran.\n\nA <UNK> came. Leaves fell. Wind rose.\n",
    )
    .unwrap();
    let args = ["score", "--word", "storm", "--explication", "something happens; people can see it; it is bad"];
    let first: Vec<&str> = ["--backends", "b.toml", "--record", "rec"]
        .into_iter()
        .chain(args)
        .chain(["--passages", "p.txt", "--report", "first.json"])
        .collect();
    let out = nsm(d, &first);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(d.join("rec/grader.json").exists());

    fs::write(
        d.join("mock.toml"),
        "[[backend]]\nname = \"grader\"\nkind = \"scorer\"\nprovider = \"mock\"\nmock_table = \"rec/grader.json\"\n",
    )
    .unwrap();
    let second: Vec<&str> = ["--backends", "mock.toml"]
        .into_iter()
        .chain(args)
        .chain(["--passages", "p.txt", "--report", "second.json"])
        .collect();
    let out = nsm(d, &second);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let strip = |name: &str| {
        let mut v: Value = serde_json::from_str(&fs::read_to_string(d.join(name)).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("generated_at");
        v["config"].as_object_mut().unwrap().remove("backends");
        v
    };
    assert_eq!(strip("first.json"), strip("second.json"));
}

#[test]
fn lexicon_validate_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = nsm(dir.path(), &["lexicon", "validate"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("65 primes"), "{}", stdout(&out));

    fs::write(dir.path().join("bad.lexicon"), "[PRIMES]\nI|substantive|i|\nME|substantive|i|\n").unwrap();
    let out = nsm(dir.path(), &["--lexicon", "bad.lexicon", "lexicon", "validate"]);
    assert_eq!(out.status.code(), Some(1));
}

fn entry_with(sense_id: &str, text: &str, score: f64, legality: f64) -> Value {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bench/entries.jsonl");
    let first = fs::read_to_string(fixture).unwrap().lines().next().unwrap().to_string();
    let mut v: Value = serde_json::from_str(&first).unwrap();
    v["sense"]["sense_id"] = sense_id.into();
    v["explication"]["lines"] = serde_json::json!([text]);
    v["score_report"]["explication_score"] = score.into();
    v["score_report"]["legality"]["legality_score"] = legality.into();
    v
}

#[test]
fn filter_matches_hand_trace() {
    // sense a: 70, 35, 34.9 -> keeps 70 and 35
    // sense b: 50 (leg 2, "zeta"), 50 (leg 2, "beta"), 50 (leg 1) -> keeps beta, zeta
    // sense c: 10 -> nothing
    let rows = [
        entry_with("a", "x", 34.9, 1.0),
        entry_with("a", "y", 70.0, 1.0),
        entry_with("a", "z", 35.0, 1.0),
        entry_with("b", "zeta", 50.0, 2.0),
        entry_with("b", "alpha", 50.0, 1.0),
        entry_with("b", "beta", 50.0, 2.0),
        entry_with("c", "w", 10.0, 1.0),
    ];
    let dir = tempfile::tempdir().unwrap();
    let body: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(dir.path().join("pool.jsonl"), body).unwrap();
    let out = nsm(
        dir.path(),
        &["dataset", "filter", "--threshold", "35", "--cap", "2", "--input", "pool.jsonl", "--out", "kept.jsonl"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("kept 4 of 7"), "{}", stdout(&out));
    let kept: Vec<DatasetEntry> = dataset::read_jsonl(dir.path().join("kept.jsonl")).unwrap();
    let got: Vec<(String, String)> = kept
        .iter()
        .map(|e| (e.sense.sense_id.clone(), e.explication.text()))
        .collect();
    let want = [("a", "y"), ("a", "z"), ("b", "beta"), ("b", "zeta")];
    assert_eq!(got, want.map(|(a, b)| (a.to_string(), b.to_string())));

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("kept.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"]["kept"], 4);
    assert_eq!(manifest["threshold"], 35.0);

    // filtering the output again changes nothing
    let out = nsm(dir.path(), &["dataset", "filter", "--input", "kept.jsonl", "--out", "again.jsonl"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(dir.path().join("kept.jsonl")).unwrap(),
        fs::read(dir.path().join("again.jsonl")).unwrap()
    );
}

#[test]
fn build_pipeline_with_synthetic_backends() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("b.toml"), SYNTHETIC).unwrap();
    fs::write(
        d.join("senses.jsonl"),
        concat!(
            r#"{"sense_id":"lamp.n.01","lemma":"lamp","gloss":"a light","synonyms":[]}"#, "\n",
            r#"{"sense_id":"want.v.01","lemma":"want","gloss":"desire","synonyms":[]}"#, "\n",
            r#"{"sense_id":"river.n.01","lemma":"river","gloss":"stream","synonyms":["stream"]}"#, "\n",
        ),
    )
    .unwrap();
    let out = nsm(d, &["--backends", "b.toml", "dataset", "build", "--senses", "senses.jsonl", "--out", "out/pool.jsonl", "--examples", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let pool: Vec<DatasetEntry> = dataset::read_jsonl(d.join("out/pool.jsonl")).unwrap();
    assert_eq!(pool.len(), 10, "two senses x five candidates; the prime lemma is dropped");
    for e in &pool {
        assert!(e.validate().is_ok());
        assert!(e.score_report.is_some());
        assert_eq!(e.provenance.generator, "gen");
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(d.join("out/pool.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"]["senses_prime_dropped"], 1);
    assert_eq!(manifest["config"]["build"]["prompts"]["version"], "nsm-dataset-prompts/1");
}
