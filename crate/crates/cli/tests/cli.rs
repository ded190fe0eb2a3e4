//! End-to-end runs of the binary against scripted fixtures.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn reformrl(run_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reformrl"))
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(run_dir: &Path, args: &[&str]) -> String {
    let out = reformrl(run_dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(path: &Path, lines: &[serde_json::Value]) {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).unwrap();
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn scripted_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let input = dir.path().join("input.jsonl");
    fixture(
        &input,
        &[
            serde_json::json!({"id": "p0", "question": "How many cells at most?", "gold_answer": "21"}),
            serde_json::json!({"id": "p1", "question": "Mislabeled question", "gold_answer": "350"}),
            serde_json::json!({"id": "p2", "question": "Easy question", "gold_answer": "7"}),
        ],
    );
    ok(&run, &["ingest", "--input", input.to_str().unwrap()]);

    let reform = dir.path().join("reform.jsonl");
    fixture(
        &reform,
        &[
            serde_json::json!({"problem_id": "p0", "level": 1, "completions": [
                "Question: How many cells at most?\nA. 18\nB. 21\nC. 24\nD. 15\nCorrect Answer: B"]}),
            serde_json::json!({"problem_id": "p0", "level": 2, "completions": [
                "Question: How many cells at most?\nA. 18\nB. 21\nC. 24\nD. 15\nE. 12\nF. 30\nG. 27\nH. 9\nI. 33\nJ. 36\nCorrect Answer: B"]}),
            serde_json::json!({"problem_id": "p0", "level": 3, "completions": ["\\boxed{2_}"]}),
            serde_json::json!({"problem_id": "p1", "completions": ["I cannot do that"]}),
            serde_json::json!({"problem_id": "p2", "completions": ["I cannot do that"]}),
        ],
    );
    ok(&run, &["reformulate", "--provider", &format!("scripted:{}", reform.display())]);
    let variants = fs::read_to_string(run.join("data/variants.jsonl")).unwrap();
    // three accepted variants for p0 plus an open-ended variant per problem
    assert_eq!(variants.lines().count(), 6, "{variants}");

    let judge = dir.path().join("judge.jsonl");
    fixture(
        &judge,
        &[
            serde_json::json!({"problem_id": "p0", "completions": ["\\boxed{21}"]}),
            serde_json::json!({"problem_id": "p1", "completions": ["\\boxed{1}"]}),
            serde_json::json!({"problem_id": "p2", "completions": ["\\boxed{7}"]}),
        ],
    );
    ok(&run, &["filter", "--mode", "silver", "--provider", &format!("scripted:{}", judge.display())]);
    assert_eq!(line_count(&run.join("data/problems.jsonl")), 2);
    assert_eq!(line_count(&run.join("data/verdicts-silver.jsonl")), 3);

    let solver = dir.path().join("solver.jsonl");
    fixture(
        &solver,
        &[
            serde_json::json!({"problem_id": "p0", "completions": ["\\boxed{20}", "\\boxed{22}"]}),
            serde_json::json!({"problem_id": "p2", "completions": ["\\boxed{7}"]}),
        ],
    );
    ok(&run, &["hardset", "--n", "8", "--provider", &format!("scripted:{}", solver.display())]);
    let hard: Vec<serde_json::Value> = fs::read_to_string(run.join("data/hardset.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(hard.len(), 2);
    for entry in &hard {
        assert_eq!(entry["hard"], entry["problem_id"] == "p0");
    }

    ok(&run, &["train", "--steps", "6", "--checkpoint-every", "2"]);
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,rollouts,"));
    assert!(run.join("config.snapshot").exists());

    let again = reformrl(&run, &["train", "--steps", "6"]);
    assert!(!again.status.success(), "a second fresh run must not overwrite the first");
    ok(&run, &["train", "--resume", "--steps", "8"]);

    let out = ok(&run, &["eval", "--pass-at-k", "1,2,4"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("pass@")).count(), 3);
    assert_eq!(line_count(&run.join("reports/pass_at_k.csv")), 4);
    assert!(fs::read_to_string(run.join("reports/pass_at_k.svg")).unwrap().contains("<polyline"));

    ok(&run, &["report", "--rollouts", "64"]);
    assert!(run.join("reports/level_accuracy.csv").exists());
    assert!(run.join("reports/level_histogram.svg").exists());
}

#[test]
fn simulated_provider_cannot_judge() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&run, &["ingest", "--synthetic", "3"]);
    let out = reformrl(&run, &["filter", "--mode", "binary", "--provider", "simulated"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("judge"));
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "tau = 0.5\nnot_a_key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_reformrl"))
        .args(["--config", cfg.to_str().unwrap(), "--run-dir"])
        .arg(dir.path().join("run"))
        .args(["ingest", "--synthetic", "2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
}
