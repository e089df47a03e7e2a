use std::fs;
use std::process::Command;

use subband_cnn::cli::{run, sweep::read_existing, EXIT_OK, EXIT_USAGE};
use subband_cnn::dsp::FeatureCache;
use subband_cnn::flops::count_flops;
use subband_cnn::subband::{Architecture, ModelSpec};

fn run_capture(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["subband"];
    full.extend_from_slice(args);
    let code = run(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn profile_matches_counter() {
    let (code, out) = run_capture(&["profile", "--arch", "full_band", "--k", "8"]);
    assert_eq!(code, EXIT_OK);
    let total = count_flops(&ModelSpec::paper(Architecture::FullBand, 8).unwrap()).totals;
    let line = out.lines().find(|l| l.starts_with("total,")).unwrap();
    assert_eq!(line, format!("total,total,{},{},{}", total.flops, total.multiplications, total.parameters));
    assert!(out.starts_with("# subband-cnn flops-report v1\nlayer,name,flops,mult,params\n"));
}

#[test]
fn profile_prints_reduction() {
    let (code, out) = run_capture(&["profile", "--arch", "overlapped", "--k", "8"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.lines().any(|l| l.starts_with("# flops reduction vs full_band K=8:")), "{out}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run_capture(&["profile", "--k", "0"]).0, EXIT_USAGE);
    assert_eq!(run_capture(&["train", "--arch", "full_band", "--bands", "3"]).0, EXIT_USAGE);
    assert_eq!(run_capture(&["profile", "--arch", "overlapped", "--bands", "5"]).0, EXIT_USAGE);
    assert_eq!(run_capture(&["profile", "--arch", "full_band", "--variant", "concat_conv2"]).0, EXIT_USAGE);
    assert_eq!(run_capture(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run_capture(&["train", "--schedule", "weekly"]).0, EXIT_USAGE);
}

#[test]
fn missing_root_names_path() {
    let out = Command::new(env!("CARGO_BIN_EXE_subband"))
        .args(["features", "--task", "commands", "--data-root", "/nonexistent/speech"])
        .env_remove("SUBBAND_DATA_ROOT")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/speech"));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.conf");
    fs::write(&cfg, "# experiment\narch = full_band\nk = 16\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let (_, out) = run_capture(&["--config", cfg, "profile"]);
    assert!(out.contains("K=16"), "{out}");
    let (_, out) = run_capture(&["--config", cfg, "profile", "--k", "24"]);
    assert!(out.contains("K=24"), "{out}");
    fs::write(dir.path().join("bad.conf"), "colour = blue\n").unwrap();
    let bad = dir.path().join("bad.conf");
    assert_eq!(run_capture(&["--config", bad.to_str().unwrap(), "profile"]).0, EXIT_USAGE);
}

#[test]
fn synthetic_features_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("feat.sbfc");
    let o = out.to_str().unwrap();
    let (code, text) = run_capture(&["features", "--task", "synthetic", "--per-class", "3", "--out", o]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.contains("train:"));
    let first = fs::read(&out).unwrap();
    assert_eq!(FeatureCache::load(&out).unwrap().len(), 36);
    run_capture(&["features", "--task", "synthetic", "--per-class", "3", "--out", o]);
    assert_eq!(fs::read(&out).unwrap(), first);
    assert!(dir.path().join("feat.manifest.csv").exists());
}

#[test]
fn train_and_eval_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let (code, text) = run_capture(&[
        "train", "--task", "synthetic", "--per-class", "3", "--arch", "overlapped", "--bands", "3", "--k", "2",
        "--steps", "100", "--eval-interval", "50", "--out-dir", d,
    ]);
    assert_eq!(code, EXIT_OK, "{text}");
    let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4, "{metrics}");
    let ckpt = dir.path().join("model.ckpt");
    let (code, text) = run_capture(&["eval", "--task", "synthetic", "--per-class", "3", "--checkpoint", ckpt.to_str().unwrap(), "--split", "train"]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.starts_with("train accuracy "));
}

#[test]
fn sweep_rows_resume_and_flops_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = out.to_str().unwrap();
    let base = ["sweep", "--task", "synthetic", "--per-class", "2", "--steps", "0", "--trials", "1", "--out", o];
    let mut args = base.to_vec();
    args.extend(["--arch-list", "full_band", "--k-list", "8,16"]);
    let (code, text) = run_capture(&args);
    assert_eq!(code, EXIT_OK, "{text}");
    let first = fs::read_to_string(&out).unwrap();
    assert_eq!(read_existing(&first).len(), 2);
    let (_, text) = run_capture(&args);
    assert!(!text.contains("mean"), "recomputed: {text}");
    assert_eq!(fs::read_to_string(&out).unwrap(), first);

    let mut all = base.to_vec();
    all.extend(["--arch-list", "full_band,full_plus_nonoverlap,overlapped_subband"]);
    assert_eq!(run_capture(&all).0, EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 24);
    for arch in ["full_band", "full_plus_nonoverlap", "overlapped_subband"] {
        let flops: Vec<u64> = rows.iter().filter(|r| r[1] == arch).map(|r| r[5].parse().unwrap()).collect();
        assert_eq!(flops.len(), 8);
        assert!(flops.windows(2).all(|w| w[0] < w[1]), "{arch}: {flops:?}");
    }
}
