//! End-to-end checks of the command-line interface: exit codes (0 success,
//! 1 usage, 2 runtime) and the artifacts each verb leaves behind.

use std::path::Path;
use std::process::{Command, Output};

fn drsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drsc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Overrides that shrink the default synthetic run to subsecond size.
fn tiny_args(out_dir: &Path) -> Vec<String> {
    let mut args: Vec<String> = vec!["train".into(), "--out".into(), out_dir.display().to_string()];
    for s in [
        "data.spec.n_classes=3",
        "data.spec.n_per_class=4",
        "data.spec.shared_dim=3",
        "data.spec.private_dim=2",
        "data.spec.text_shape=[4,6]",
        "data.spec.mel_shape=[5,8]",
        "model.channels=8",
        "model.conv_bank_kernels=[1,3]",
        "model.n_res_blocks=1",
        "model.d_content=3",
        "model.d_intent=4",
        "model.intent_hidden=5",
        "model.fusion_hidden=6",
        "model.disc_channels=4",
        "model.disc_layers=2",
        "train.max_epochs=1",
        "train.batch_size=8",
    ] {
        args.push("--set".into());
        args.push(s.into());
    }
    args
}

#[test]
fn help_exits_zero() {
    let out = drsc(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for verb in ["prep", "train", "eval", "ablate", "robustness", "sweep", "synth-test"] {
        assert!(text.contains(verb), "help should list {verb}: {text}");
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(code(&drsc(&["frobnicate"])), 1);
}

#[test]
fn bad_override_is_usage_error() {
    let out = drsc(&["train", "--set", "train.no_such_knob=1"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_knob"), "{err}");
}

#[test]
fn invalid_value_is_usage_error() {
    let out = drsc(&["train", "--set", "train.lr=-3"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_run_dir_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("no_such_run");
    let out = drsc(&["eval", "--run", bogus.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_dataset_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = drsc(&[
        "prep",
        "--dataset",
        dir.path().join("nowhere").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_then_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let args = tiny_args(&run_dir);
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = drsc(&arg_refs);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best_test_accuracy"), "{stdout}");
    for artifact in ["config.json", "metrics.jsonl", "last.bin", "best.bin", "summary.json"] {
        assert!(run_dir.join(artifact).exists(), "missing {artifact}");
    }

    let out = drsc(&["eval", "--run", run_dir.to_str().unwrap(), "--checkpoint", "last"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"accuracy\""), "{stdout}");
    assert!(run_dir.join("eval_last.csv").exists());
}

#[test]
fn synth_test_reports_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("synth");
    // thresholds at zero: the tiny run itself must succeed (exit 0)
    let out = drsc(&[
        "synth-test",
        "--classes",
        "3",
        "--per-class",
        "5",
        "--epochs",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--min-accuracy",
        "0",
        "--min-flip-rate",
        "0",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("synth_report.json").exists());

    // an unreachable accuracy threshold fails as a runtime error
    let out = drsc(&[
        "synth-test",
        "--classes",
        "3",
        "--per-class",
        "5",
        "--epochs",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--min-accuracy",
        "1.5",
        "--min-flip-rate",
        "0",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
