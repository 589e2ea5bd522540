use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dstft::signals::encode_wav_pcm16_mono;

const SMALL: [&str; 8] = [
    "--support-n",
    "64",
    "--hop",
    "16",
    "--signals",
    "2",
    "--samples",
    "1024",
];

fn dstft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dstft")).args(args).output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out-dir", dir.to_str().unwrap()]);
    dstft(&all)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gradcheck_passes_and_corrupt_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_in(dir.path(), &["gradcheck"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let lines = csv_lines(&dir.path().join("gradcheck.csv"));
    assert_eq!(lines[0], "case,variant,theta,analytic,numeric,rel_error,pass");
    assert!(lines.len() > 20);
    assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "gradcheck");
    for a in m["artifacts"].as_array().unwrap() {
        assert!(Path::new(a.as_str().unwrap()).exists());
    }

    let bad = run_in(dir.path(), &["gradcheck", "--corrupt"]);
    assert_eq!(code(&bad), 1);
    assert!(csv_lines(&dir.path().join("gradcheck.csv"))[1..].iter().any(|l| l.ends_with(",false")));
}

#[test]
fn usage_errors_exit_2() {
    let o = dstft(&["gradcheck", "--no-such-flag"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&dstft(&["frobnicate"])), 2);
    assert_eq!(code(&dstft(&["track", "--variant", "sideways"])), 2);
}

#[test]
fn sweep_one_point_and_bad_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--steps", "1", "--theta-min", "20"];
    args.extend(SMALL);
    let o = run_in(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = csv_lines(&dir.path().join("sweep.csv"));
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("20,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("argmin theta 20"));

    let mut args = vec!["sweep", "--theta-max", "300"];
    args.extend(SMALL);
    assert_eq!(code(&run_in(dir.path(), &args)), 2);
    let mut args = vec!["sweep", "--theta-min", "1"];
    args.extend(SMALL);
    assert_eq!(code(&run_in(dir.path(), &args)), 2);
}

#[test]
fn default_sweep_has_interior_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["sweep"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("interior minimum true"));
}

#[test]
fn track_writes_trace_estimates_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["track", "--iters", "5", "--theta0", "30", "--sweep-steps", "4"];
    args.extend(SMALL);
    let o = run_in(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = csv_lines(&dir.path().join("trace.csv"));
    assert_eq!(trace[0], "iter,theta,loss,grad");
    assert!(trace.len() >= 2 && trace.len() <= 7);
    let track = csv_lines(&dir.path().join("track.csv"));
    assert_eq!(track[0], "frame,estimate_bin,truth_bin,estimate_hz,truth_hz");
    assert!(track.len() > 10);
    assert_eq!(csv_lines(&dir.path().join("sweep.csv")).len(), 5);
    let m = manifest(dir.path());
    assert_eq!(m["config"]["theta0"], 30.0);
    assert_eq!(m["config"]["transform"]["support_n"], 64);
}

#[test]
fn track_zero_iterations_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["track", "--iters", "0", "--sweep-steps", "2"];
    args.extend(SMALL);
    assert_eq!(code(&run_in(dir.path(), &args)), 0);
    let trace = csv_lines(&dir.path().join("trace.csv"));
    assert_eq!(trace.len(), 2);
    assert!(trace[1].starts_with("0,4,"));
}

#[test]
fn track_non_finite_loss_flushes_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["track", "--nan-at", "3", "--theta0", "40"];
    args.extend(SMALL);
    let o = run_in(dir.path(), &args);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
    let trace = csv_lines(&dir.path().join("trace.csv"));
    assert_eq!(trace.len(), 4);
}

#[test]
fn joint_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let small = ["--per-class", "3", "--samples", "512", "--support-n", "64", "--hop", "16"];
    let mut args = vec!["joint", "--epochs", "0"];
    args.extend(small);
    let o = run_in(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = csv_lines(&dir.path().join("trace.csv"));
    assert_eq!(trace[0], "epoch,theta,loss,val_loss,grad_theta,param_norm");
    assert_eq!(trace.len(), 2);

    let mut args = vec!["joint", "--carriers", "1500"];
    args.extend(small);
    assert_eq!(code(&run_in(dir.path(), &args)), 2);
    let mut args = vec!["joint", "--variant", "fixed-overlap"];
    args.extend(small);
    assert_eq!(code(&run_in(dir.path(), &args)), 2);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\niters 0\ntheta0 = 12\nsupport-n 64\nhop 16\nsignals 2\nsamples 1024\nsweep-steps 2\n").unwrap();
    let o = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "track", "--theta0", "9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = csv_lines(&dir.path().join("trace.csv"));
    assert_eq!(trace.len(), 2);
    assert!(trace[1].starts_with("0,9,"));
    assert_eq!(code(&dstft(&["track", "--config", "/nonexistent.cfg"])), 2);
}

#[test]
fn wav_info_reports_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let samples: Vec<f64> = (0..800).map(|i| 0.5 * (i as f64 * 0.1).sin()).collect();
    fs::write(&path, encode_wav_pcm16_mono(&samples, 8000)).unwrap();
    let o = dstft(&["wav-info", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("sample_rate 8000"));
    assert!(out.contains("samples 800"));
    assert!(out.contains("duration_s 0.1"));

    fs::write(&path, b"RIFF\x04\x00\x00\x00WAVE").unwrap();
    assert_eq!(code(&dstft(&["wav-info", path.to_str().unwrap()])), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut track = vec!["track", "--iters", "8", "--theta0", "20", "--sweep-steps", "6", "--seed", "4"];
    track.extend(SMALL);
    for dir in [&a, &b] {
        assert_eq!(code(&run_in(dir.path(), &track)), 0);
    }
    for f in ["trace.csv", "track.csv", "sweep.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
