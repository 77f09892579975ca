//! Black-box tests of the `truecase` binary: exit codes, stream behaviour,
//! determinism of the written checkpoint.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_truecase")
}

struct Fixture {
    _dir: tempfile::TempDir,
    corpus: PathBuf,
    model: PathBuf,
}

/// One shared tiny training run for every test that needs a model file.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus.txt");
        common::write_lines(&corpus, &common::synthetic_corpus(5, 12, usize::MAX));
        let model = dir.path().join("model.tc");
        let out = Command::new(bin())
            .args(["train", "--train"])
            .arg(&corpus)
            .arg("--dev")
            .arg(&corpus)
            .arg("--out")
            .arg(&model)
            .args(["--epochs", "2", "--seed", "7"])
            .output()
            .unwrap();
        assert!(out.status.success(), "fixture training failed: {out:?}");
        Fixture {
            _dir: dir,
            corpus,
            model,
        }
    })
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(bin())
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn train_is_deterministic_per_seed() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.tc");
    let out = Command::new(bin())
        .args(["train", "--train"])
        .arg(&fx.corpus)
        .arg("--dev")
        .arg(&fx.corpus)
        .arg("--out")
        .arg(&again)
        .args(["--epochs", "2", "--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(&fx.model).unwrap();
    let b = std::fs::read(&again).unwrap();
    assert_eq!(a, b, "same seed must produce byte-identical checkpoints");
}

#[test]
fn apply_reads_stdin_line_per_line() {
    let fx = fixture();
    let model = fx.model.to_str().unwrap();
    let out = run_with_stdin(&["apply", "--model", model], "hello\n\nworld today\n");
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.split('\n').collect();
    // three input lines -> three output lines (+ trailing split artifact)
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0].to_lowercase(), "hello");
    assert_eq!(lines[1], "");
    assert_eq!(lines[2].to_lowercase(), "world today");
}

#[test]
fn apply_reads_input_file() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    common::write_lines(&input, &["one line", "and two"]);
    let out = Command::new(bin())
        .args(["apply", "--model"])
        .arg(&fx.model)
        .arg("--input")
        .arg(&input)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
}

#[test]
fn eval_emits_table_and_record() {
    let fx = fixture();
    let out = Command::new(bin())
        .args(["eval", "--model"])
        .arg(&fx.model)
        .arg("--test")
        .arg(&fx.corpus)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("accuracy"), "{stdout}");
    let record = stdout.lines().last().unwrap();
    for key in ["acc=", "p=", "r=", "f1=", "tp=", "fp=", "fn=", "tn="] {
        assert!(record.contains(key), "missing {key} in {record}");
    }
}

#[test]
fn baseline_trains_and_scores() {
    let fx = fixture();
    let out = Command::new(bin())
        .args(["baseline", "--train"])
        .arg(&fx.corpus)
        .arg("--test")
        .arg(&fx.corpus)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("f1="), "{stdout}");
}

#[test]
fn gradcheck_passes_and_exits_zero() {
    let out = Command::new(bin())
        .args(["gradcheck", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("max relative error"), "{stdout}");
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = Command::new(bin())
        .args(["gradcheck", "--frobnicate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_subcommand_is_usage_error() {
    let out = Command::new(bin()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_flags_with_defaults() {
    let out = Command::new(bin()).args(["train", "--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "--train", "--dev", "--out", "--epochs", "--batch-size", "--lr", "--seed", "--no-cnn",
        "--no-crf", "--clip", "--patience", "0.002", "64", "30", "42",
    ] {
        assert!(stdout.contains(needle), "train --help missing {needle}");
    }
    for sub in ["eval", "apply", "gradcheck", "baseline"] {
        let out = Command::new(bin()).args([sub, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
    }
}

#[test]
fn missing_model_file_is_runtime_error() {
    let out = Command::new(bin())
        .args(["eval", "--model", "/nonexistent/model.tc", "--test", "/nonexistent/t.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("/nonexistent/model.tc"), "{stderr}");
}

#[test]
fn missing_corpus_file_is_runtime_error() {
    let out = Command::new(bin())
        .args([
            "train",
            "--train",
            "/nonexistent/corpus.txt",
            "--dev",
            "/nonexistent/corpus.txt",
            "--out",
            "/tmp/never-written.tc",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("/nonexistent/corpus.txt"), "{stderr}");
}

#[test]
fn threads_env_is_honored() {
    let fx = fixture();
    let model = fx.model.to_str().unwrap();
    let mut child = Command::new(bin())
        .env("TRUECASE_THREADS", "2")
        .args(["apply", "--model", model])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.as_mut().unwrap().write_all(b"fine\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());

    let bad = Command::new(bin())
        .env("TRUECASE_THREADS", "zero")
        .args(["gradcheck"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
