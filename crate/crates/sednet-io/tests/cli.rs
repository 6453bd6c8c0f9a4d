//! End-to-end tests driving the `sednet` binary.

use std::path::Path;
use std::process::{Command, Output};

fn sednet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sednet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sednet(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synth_small(dir: &Path, seed: &str) {
    ok(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--samples",
        "5",
        "--slices",
        "8",
        "--size",
        "16",
        "--empty-rate",
        "0.2",
        "--seed",
        seed,
    ]);
}

#[test]
fn synth_preprocess_train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let prep = tmp.path().join("prep");
    let run = tmp.path().join("run");
    let eval = tmp.path().join("eval");

    synth_small(&data, "7");
    ok(&[
        "preprocess",
        "--data",
        data.to_str().unwrap(),
        "--out",
        prep.to_str().unwrap(),
        "--size",
        "16",
        "--threshold-T",
        "4",
    ]);
    assert!(prep.join("preprocess.json").exists());
    assert!(prep.join("run.json").exists());

    ok(&[
        "train",
        "--data",
        prep.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--base-filters",
        "4",
        "--epochs",
        "2",
        "--lr",
        "0.003",
        "--seed",
        "1",
    ]);
    for artifact in [
        "epochs.csv",
        "best.sedw",
        "final.sedw",
        "config.json",
        "run.json",
    ] {
        assert!(run.join(artifact).exists(), "{artifact} missing");
    }

    let stdout = ok(&[
        "eval",
        "--weights",
        run.join("best.sedw").to_str().unwrap(),
        "--data",
        prep.to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
        "--split",
        "val",
        "--seed",
        "1",
    ]);
    assert!(stdout.contains("ntc: dice"));
    let csv = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("split,class,dice,hausdorff,n_slices,n_hd_undefined\n"));
    assert_eq!(csv.lines().count(), 4);

    // A second evaluation of the same weights and split is identical.
    let eval2 = tmp.path().join("eval2");
    ok(&[
        "eval",
        "--weights",
        run.join("best.sedw").to_str().unwrap(),
        "--data",
        prep.to_str().unwrap(),
        "--out",
        eval2.to_str().unwrap(),
        "--split",
        "val",
        "--seed",
        "1",
    ]);
    let csv2 = std::fs::read_to_string(eval2.join("metrics.csv")).unwrap();
    assert_eq!(csv, csv2);
}

#[test]
fn train_then_eval_twice_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, "3");
    let prep = tmp.path().join("prep");
    ok(&[
        "preprocess",
        "--data",
        data.to_str().unwrap(),
        "--out",
        prep.to_str().unwrap(),
        "--size",
        "16",
        "--threshold-T",
        "4",
    ]);

    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let run = tmp.path().join(name);
        ok(&[
            "train",
            "--data",
            prep.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
            "--base-filters",
            "4",
            "--epochs",
            "2",
            "--seed",
            "9",
            "--deterministic",
        ]);
        csvs.push(std::fs::read(run.join("epochs.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "seed-fixed runs must be byte-identical");
}

#[test]
fn transfer_runs_head_only() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, "5");
    let run = tmp.path().join("run");
    ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--base-filters",
        "4",
        "--epochs",
        "1",
        "--seed",
        "2",
    ]);
    let xfer = tmp.path().join("xfer");
    let stdout = ok(&[
        "transfer",
        "--weights",
        run.join("best.sedw").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        xfer.to_str().unwrap(),
        "--epochs",
        "1",
        "--seed",
        "2",
    ]);
    // Head of a base-4 ladder: 1x1 conv from 4 channels to 3 classes.
    assert!(stdout.contains("15 trainable parameters"), "{stdout}");
    assert!(xfer.join("final.sedw").exists());
}

#[test]
fn predict_emits_pgm_and_ppm() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, "11");
    let run = tmp.path().join("run");
    ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--base-filters",
        "4",
        "--epochs",
        "1",
        "--seed",
        "4",
    ]);
    let pred = tmp.path().join("pred");
    ok(&[
        "predict",
        "--weights",
        run.join("best.sedw").to_str().unwrap(),
        "--input",
        data.join("synth-000.sedvol").to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    let pgm = std::fs::read(pred.join("synth-000_s000_ntc.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    let ppm = std::fs::read(pred.join("synth-000_s000_overlay.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n16 16\n255\n"));
}

#[test]
fn summary_prints_total_parameters() {
    let stdout = ok(&["summary"]);
    assert!(stdout.contains("total parameters: 1486499"), "{stdout}");
    assert!(stdout.contains("skip: enc2.conv2 -> dec1.concat"));

    let stdout = ok(&["summary", "--base-filters", "4", "--size", "16"]);
    assert!(stdout.contains("total parameters:"));
}

#[test]
fn losses_compare_emits_five_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, "13");
    let out = tmp.path().join("cmp");
    ok(&[
        "losses-compare",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--base-filters",
        "4",
        "--epochs",
        "1",
        "--seed",
        "6",
    ]);
    let csv = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "loss,dice_ntc,dice_ed,dice_et");
    assert_eq!(lines.len(), 6);
    for (line, name) in lines[1..]
        .iter()
        .zip(["bce", "bced", "bcesd", "wbcesd-e", "wbcesd-p"])
    {
        assert!(line.starts_with(&format!("{name},")), "{line}");
        assert_eq!(line.split(',').count(), 4);
    }
}

#[test]
fn exit_codes_and_error_lines() {
    // Usage error: unknown flag.
    let out = sednet(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: usage:"), "{stderr}");

    // Data error: missing dataset directory.
    let tmp = tempfile::tempdir().unwrap();
    let out = sednet(&[
        "train",
        "--data",
        tmp.path().join("nope").to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: data:"), "{stderr}");
    assert_eq!(
        stderr.trim().lines().count(),
        1,
        "one-line reason: {stderr}"
    );

    // Data error: corrupt volume file.
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::write(data.join("bad.sedvol"), b"garbage").unwrap();
    let out = sednet(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("run2").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_directory_refuses_second_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, "1");
    let out = sednet(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--samples",
        "2",
        "--slices",
        "2",
        "--size",
        "16",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("run.json"), "{stderr}");
}

#[test]
fn help_and_version_exit_zero() {
    let out = sednet(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    let out = sednet(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn fingerprint_mismatch_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, "8");
    let run = tmp.path().join("run");
    ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--base-filters",
        "4",
        "--epochs",
        "1",
    ]);
    // Evaluating 16px weights against 32px data must refuse cleanly.
    let data32 = tmp.path().join("data32");
    ok(&[
        "synth",
        "--out",
        data32.to_str().unwrap(),
        "--samples",
        "3",
        "--slices",
        "4",
        "--size",
        "32",
    ]);
    let out = sednet(&[
        "eval",
        "--weights",
        run.join("best.sedw").to_str().unwrap(),
        "--data",
        data32.to_str().unwrap(),
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
