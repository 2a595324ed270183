mod common;

use std::process::Command;

use outrand::cli::run_cli;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("outrand").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn calibrate_prints_variance() {
    let (code, out, _) = run(&["calibrate", "--k", "0.01", "--delta", "0.5", "--mode", "paper"]);
    assert_eq!((code, out.trim()), (0, "0.107465"));
    let (code, out, _) = run(&["calibrate", "--k", "0.01", "--delta", "0.5", "--mode", "corrected"]);
    assert_eq!((code, out.trim()), (0, "0.023097"));
    let (code, _, err) = run(&["calibrate", "--k", "0.6", "--delta", "0.5"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["calibrate", "--k", "0.1", "--delta", "0.5", "--bogus"]).0, 2);
    assert_eq!(
        run(&["calibrate", "--k", "0.1", "--delta", "0.5", "--mode", "sideways"]).0,
        2
    );
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("experiment"));
}

#[test]
fn missing_spec_names_the_path() {
    let (code, _, err) = run(&["experiment", "--spec", "missing.cfg"]);
    assert_ne!(code, 0);
    assert!(err.contains("missing.cfg"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_outrand");
    let s = Command::new(bin)
        .args(["calibrate", "--k", "0.01", "--delta", "0.5", "--mode", "paper"])
        .output()
        .unwrap();
    assert!(s.status.success());
    assert_eq!(String::from_utf8_lossy(&s.stdout).trim(), "0.107465");
    let s = Command::new(bin).arg("nope").output().unwrap();
    assert_eq!(s.status.code(), Some(2));
}

#[test]
fn train_attack_analyze_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("digits.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let (train, test) = (common::digits_ref("train"), common::digits_ref("test"));
    let (code, out, err) = run(&["train", "--dataset", &train, "--out", ckpt, "--seed", "1"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("train_accuracy="));

    let (code, out, _) = run(&[
        "attack",
        "--dataset",
        &test,
        "--model",
        ckpt,
        "--attack",
        "zoo",
        "--iters",
        "0",
    ]);
    assert_eq!(code, 0);
    assert!(
        out.contains("success=false") && out.contains("l2_distortion=0 "),
        "{out}"
    );

    let (code, out, _) = run(&[
        "attack",
        "--dataset",
        &test,
        "--model",
        ckpt,
        "--attack",
        "ql",
        "--goal",
        "targeted",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("queries="));

    let (code, out, _) = run(&[
        "analyze",
        "--dataset",
        &test,
        "--model",
        ckpt,
        "--coord",
        "20",
        "--samples",
        "1000",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("taylor_error=") && out.contains("empirical_error="));

    let spec = dir.path().join("exp.cfg");
    std::fs::write(
        &spec,
        format!("id = cli\nkind = accuracy_vs_variance\ndataset = {test}\nmodel = {ckpt}\nrepeats = 2\n"),
    )
    .unwrap();
    let csv = dir.path().join("out/cli.csv");
    let args = [
        "experiment",
        "--spec",
        spec.to_str().unwrap(),
        "--sigma2",
        "0",
        "--sigma2",
        "1e-2",
        "--out",
        csv.to_str().unwrap(),
    ];
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("wrote 4 rows"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().nth(2).unwrap().starts_with("cli,,,0,,0,,"));

    let (code, _, err) = run(&["experiment", "--spec", spec.to_str().unwrap(), "--images", "none"]);
    assert_eq!(code, 1);
    assert!(err.contains("images"));
}
