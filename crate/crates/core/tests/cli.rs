//! The command-line front end: exit codes, run log and reproducibility.

use std::fs;
use std::path::Path;

use revsum::cli::{run_cli, sha256_file};

fn root() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn run(stage: &[&str], work: &Path, extra: &[&str]) -> i32 {
    let config = root().join("configs/mini.toml").display().to_string();
    let w = work.display().to_string();
    let mut args = vec!["revsum"];
    args.extend_from_slice(stage);
    args.extend_from_slice(&["--config", &config, "--work-dir", &w]);
    args.extend_from_slice(extra);
    run_cli(args)
}

fn prepare(work: &Path) {
    let corpus = root().join("data/mini_corpus.jsonl").display().to_string();
    for stage in [&["ingest", "--input", corpus.as_str()][..], &["split"], &["train-vocab"], &["mine-controls"], &["build-pairs"]] {
        assert_eq!(run(stage, work, &[]), 0, "{}", stage[0]);
    }
}

#[test]
fn data_stages_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    prepare(a.path());
    prepare(b.path());
    for f in ["corpus.jsonl", "train.jsonl", "valid.jsonl", "vocab.txt", "vocab_control.txt", "classifiers.json", "lexicon.tsv", "pairs_train.jsonl", "pairs_valid.jsonl"] {
        assert_eq!(
            sha256_file(&a.path().join(f)).unwrap(),
            sha256_file(&b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let log = fs::read_to_string(a.path().join("run_log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[1]["command"], "split");
    assert_eq!(lines[1]["config"]["split"]["valid_fraction"], 0.2);
    let inputs = lines[1]["inputs"].as_object().unwrap();
    let corpus_path = a.path().join("corpus.jsonl").display().to_string();
    assert_eq!(inputs[&corpus_path], sha256_file(&a.path().join("corpus.jsonl")).unwrap());
}

#[test]
fn short_training_run_feeds_later_stages() {
    let w = tempfile::tempdir().unwrap();
    prepare(w.path());
    let short = ["--set", "train.total_steps=20", "--set", "train.warmup_steps=5", "--set", "train.eval_interval=10", "--set", "compliance.n_reviews=2", "--set", "compliance.repeats=1"];
    assert_eq!(run(&["train"], w.path(), &short), 0);
    assert!(w.path().join("checkpoints/best.ckpt").exists());
    let log = fs::read_to_string(w.path().join("checkpoints/train_log.tsv")).unwrap();
    assert!(log.starts_with("step\tloss\tlr\twps\tvalid_ppl"));
    assert_eq!(run(&["summarize"], w.path(), &["--set", "decode.budget=10"]), 0);
    assert_eq!(run(&["evaluate"], w.path(), &[]), 0);
    assert!(w.path().join("reports/eval.tsv").exists());
    assert_eq!(run(&["control-compliance"], w.path(), &short[4..]), 0);
    assert_eq!(run(&["summarize"], w.path(), &["--entity", "nope"]), 2);
    // a checkpoint trained on another vocabulary is rejected
    fs::write(w.path().join("vocab_control.txt"), fs::read(w.path().join("vocab.txt")).unwrap()).unwrap();
    assert_eq!(run(&["summarize"], w.path(), &[]), 2);
}

#[test]
fn exit_codes() {
    let w = tempfile::tempdir().unwrap();
    let wd = w.path().display().to_string();
    assert_eq!(run_cli(["revsum", "grad-check", "--seed", "7", "--work-dir", &wd]), 0);
    assert_eq!(run_cli(["revsum", "no-such-command"]), 1);
    assert_eq!(run(&["train"], w.path(), &["--set", "decode.beem_size=3"]), 1);
    assert_eq!(run(&["split"], w.path(), &[]), 2);
    fs::write(w.path().join("bad.toml"), "[model]\nd_model = \"wide\"\n").unwrap();
    let bad = w.path().join("bad.toml").display().to_string();
    assert_eq!(run_cli(["revsum", "grad-check", "--config", &bad]), 1);
    // an impossible tolerance is reported as a numerical failure
    assert_eq!(run_cli(["revsum", "grad-check", "--work-dir", &wd, "--set", "grad_check.tolerance=1e-30", "--set", "grad_check.coordinates=5"]), 3);
}
