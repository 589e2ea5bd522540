//! One function per subcommand; each returns the process exit status.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dstft::experiments::{
    cross_entropy, joint_forward, joint_train, sweep_loss, theta_grid, FmClassData, JointConfig, SignalFamily,
    TrackingData,
};
use dstft::optim::{default_suite, gd_theta, gradcheck_report, OptimConfig, OptimTrace};
use dstft::signals::read_wav_pcm16_mono;
use dstft::spectro::{theta_loss_and_grad, tracking_estimates};
use dstft::{Error, Variant, WindowParams};
use serde::Serialize;
use serde_json::json;

use crate::output::{num, seconds, write_csv, RunManifest};
use crate::{
    DatasetArgs, FamilyArg, GradcheckArgs, JointArgs, SweepArgs, TrackArgs, TransformArgs, VariantArg, WavInfoArgs,
    EXIT_FAILURE, EXIT_USAGE,
};

/// Largest relative error accepted by the in-training gradient checks.
const JOINT_CHECK_TOLERANCE: f64 = 1e-4;

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidTheta(_)
            | Error::InvalidParams(_)
            | Error::NotPowerOfTwo(_)
            | Error::InvalidAlpha(_)
            | Error::InvalidGrid(_)
            | Error::InvalidShift(_)
            | Error::NyquistViolation { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

fn finish(r: Result<u8, Failure>) -> u8 {
    match r {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn out_dir(dir: &Path) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn variant(t: &TransformArgs) -> Variant {
    match t.variant {
        VariantArg::FixedSize => Variant::FixedSize { hop: t.hop },
        VariantArg::FixedOverlap => Variant::FixedOverlap { alpha: t.alpha },
    }
}

fn dataset(d: &DatasetArgs, seed: u64) -> TrackingData {
    let family = match d.family {
        FamilyArg::Fm => SignalFamily::SinusoidalFm {
            carrier_hz: d.carrier,
            carrier_jitter_hz: d.carrier_jitter,
            depth_hz: d.depth,
            rate_hz: d.rate,
            rate_jitter_hz: d.rate_jitter,
        },
        FamilyArg::Constant => SignalFamily::Constant {
            freq_hz: d.carrier,
            jitter_hz: d.carrier_jitter,
        },
        FamilyArg::Chirp => SignalFamily::LinearChirp {
            start_hz: d.carrier - d.depth,
            end_hz: d.carrier + d.depth,
        },
    };
    TrackingData {
        family,
        n_signals: d.signals,
        n_samples: d.samples,
        sample_rate: d.sample_rate,
        snr_db: d.snr,
        seed,
    }
}

/// Window parameters with `theta` at the lower bound; checks the bounds.
fn bounded_params(support_n: usize, lo: f64, hi: Option<f64>) -> Result<WindowParams, Failure> {
    let hi = hi.unwrap_or(support_n as f64);
    WindowParams::with_bounds(support_n, lo, lo, hi).map_err(Failure::from)
}

fn trace_rows(trace: &OptimTrace) -> Vec<Vec<String>> {
    trace
        .records
        .iter()
        .map(|r| vec![r.iter.to_string(), num(r.theta), num(r.loss), num(r.grad_theta)])
        .collect()
}

const TRACE_HEADER: [&str; 4] = ["iter", "theta", "loss", "grad"];

pub fn gradcheck(a: &GradcheckArgs) -> u8 {
    finish(run_gradcheck(a))
}

fn run_gradcheck(a: &GradcheckArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let dir = out_dir(&a.out.out_dir)?;
    let corrupt = if a.corrupt { 1.1 } else { 1.0 };
    let rows = gradcheck_report(&default_suite(a.seed), corrupt);
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.case.clone(),
                r.variant.to_string(),
                num(r.theta),
                num(r.analytic),
                num(r.numeric),
                num(r.rel_error),
                r.pass.to_string(),
            ]
        })
        .collect();
    let csv = dir.join("gradcheck.csv");
    write_csv(
        &csv,
        &["case", "variant", "theta", "analytic", "numeric", "rel_error", "pass"],
        &csv_rows,
    )?;
    let passed = rows.iter().filter(|r| r.pass).count();
    let worst = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    println!("{passed}/{} cases passed, worst relative error {worst:e}", rows.len());
    let manifest = RunManifest {
        command: "gradcheck",
        config: a,
        seed: a.seed,
        artifacts: vec![csv],
        duration_s: seconds(start.elapsed()),
        summary: json!({ "cases": rows.len(), "passed": passed, "worst_rel_error": worst }),
    };
    manifest.write(&dir)?;
    Ok(if passed == rows.len() { 0 } else { EXIT_FAILURE })
}

pub fn sweep(a: &SweepArgs) -> u8 {
    finish(run_sweep(a))
}

fn run_sweep(a: &SweepArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let base = bounded_params(a.transform.support_n, a.theta_min, a.theta_max)?;
    let grid = theta_grid(base.theta_min(), base.theta_max(), a.steps)?;
    let batch = dataset(&a.dataset, a.seed).generate()?;
    let dir = out_dir(&a.out.out_dir)?;
    let result = sweep_loss(&batch, &grid, &base, &variant(&a.transform))?;
    let rows: Vec<Vec<String>> = result
        .thetas
        .iter()
        .zip(&result.losses)
        .map(|(t, l)| vec![num(*t), num(*l)])
        .collect();
    let csv = dir.join("sweep.csv");
    write_csv(&csv, &["theta", "loss"], &rows)?;
    println!("argmin theta {}", result.argmin_theta);
    println!("interior minimum {}", result.has_interior_minimum());
    let manifest = RunManifest {
        command: "sweep",
        config: a,
        seed: a.seed,
        artifacts: vec![csv],
        duration_s: seconds(start.elapsed()),
        summary: json!({
            "argmin_theta": result.argmin_theta,
            "grid_step": result.step(),
            "interior_minimum": result.has_interior_minimum(),
        }),
    };
    manifest.write(&dir)?;
    Ok(0)
}

pub fn track(a: &TrackArgs) -> u8 {
    finish(run_track(a))
}

fn run_track(a: &TrackArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let n = a.transform.support_n;
    let base = bounded_params(n, a.theta_min, a.theta_max)?;
    let optim = OptimConfig {
        learning_rate: a.lr,
        max_iters: a.iters,
        theta_min: base.theta_min(),
        theta_max: base.theta_max(),
        tolerance: a.tol,
        seed: a.seed,
    };
    optim.validate()?;
    if !a.theta0.is_finite() {
        return Err(usage(format!("theta0 {}", a.theta0)));
    }
    let v = variant(&a.transform);
    let grid = theta_grid(base.theta_min(), base.theta_max(), a.sweep_steps)?;
    let batch = dataset(&a.dataset, a.seed).generate()?;
    let dir = out_dir(&a.out.out_dir)?;
    let trace_csv = dir.join("trace.csv");

    let mut calls = 0;
    let descent = gd_theta(
        |theta| {
            let lg = theta_loss_and_grad(&batch, &base.with_theta(theta)?, &v)?;
            let loss = if a.nan_at == Some(calls) { f64::NAN } else { lg.loss };
            calls += 1;
            Ok((loss, lg.grad))
        },
        a.theta0,
        &optim,
    );
    let trace = match descent {
        Ok(t) => t,
        Err(Error::NonFiniteLoss { iter, partial }) => {
            write_csv(&trace_csv, &TRACE_HEADER, &trace_rows(&partial))?;
            return Err(Failure {
                code: EXIT_FAILURE,
                message: format!(
                    "loss became non-finite at iteration {iter}; partial trace in {}",
                    trace_csv.display()
                ),
            });
        }
        Err(e) => return Err(e.into()),
    };
    write_csv(&trace_csv, &TRACE_HEADER, &trace_rows(&trace))?;

    let final_theta = trace.final_theta().unwrap_or(a.theta0);
    let params = base.with_theta(final_theta)?;
    let track = tracking_estimates(&batch[0], &params, &v)?;
    let to_hz = a.dataset.sample_rate / n as f64;
    let rows: Vec<Vec<String>> = (0..track.frame_count())
        .filter(|&i| track.included[i])
        .map(|i| {
            let (e, t) = (track.estimates[i], track.truth[i]);
            vec![i.to_string(), num(e), num(t), num(e * to_hz), num(t * to_hz)]
        })
        .collect();
    let track_csv = dir.join("track.csv");
    write_csv(
        &track_csv,
        &["frame", "estimate_bin", "truth_bin", "estimate_hz", "truth_hz"],
        &rows,
    )?;

    let sweep = sweep_loss(&batch, &grid, &base, &v)?;
    let sweep_csv = dir.join("sweep.csv");
    let sweep_rows: Vec<Vec<String>> = sweep
        .thetas
        .iter()
        .zip(&sweep.losses)
        .map(|(t, l)| vec![num(*t), num(*l)])
        .collect();
    write_csv(&sweep_csv, &["theta", "loss"], &sweep_rows)?;

    let first = trace.first().map(|r| r.loss).unwrap_or(f64::NAN);
    let last = trace.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!("final theta {final_theta} after {} evaluations ({:?})", trace.records.len(), trace.stop);
    println!("loss {first} -> {last}");
    println!("sweep argmin {} (grid step {})", sweep.argmin_theta, sweep.step());
    let manifest = RunManifest {
        command: "track",
        config: a,
        seed: a.seed,
        artifacts: vec![trace_csv, track_csv, sweep_csv],
        duration_s: seconds(start.elapsed()),
        summary: json!({
            "final_theta": final_theta,
            "initial_loss": first,
            "final_loss": last,
            "evaluations": trace.records.len(),
            "converged": matches!(trace.stop, dstft::optim::StopReason::Converged),
            "sweep_argmin_theta": sweep.argmin_theta,
            "sweep_grid_step": sweep.step(),
        }),
    };
    manifest.write(&dir)?;
    Ok(0)
}

pub fn joint(a: &JointArgs) -> u8 {
    finish(run_joint(a))
}

#[derive(Serialize)]
struct JointSummary {
    final_theta: f64,
    initial_loss: f64,
    final_loss: f64,
    final_val_loss: f64,
    val_accuracy: f64,
    checks: usize,
    worst_check_rel_error: f64,
}

fn run_joint(a: &JointArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    if a.transform.variant != VariantArg::FixedSize {
        return Err(usage("joint training uses the fixed-size variant only"));
    }
    let n = a.transform.support_n;
    let base = bounded_params(n, a.theta_min, a.theta_max)?;
    let data = FmClassData {
        class_carrier_hz: a.carriers.clone(),
        depth_hz: a.depth,
        rate_lo_hz: a.rate_lo,
        rate_hi_hz: a.rate_hi,
        snr_db: a.snr,
        n_per_class: a.per_class,
        n_samples: a.samples,
        sample_rate: a.sample_rate,
        seed: a.seed,
    };
    let (train, val) = data.split()?;
    let config = JointConfig {
        support_n: n,
        hop: a.transform.hop,
        theta0: a.theta0,
        theta_min: base.theta_min(),
        theta_max: base.theta_max(),
        epochs: a.epochs,
        lr_weights: a.lr,
        lr_theta: a.lr_theta,
        check_every: a.check_every,
        check_epsilon: a.check_epsilon,
    };
    let dir = out_dir(&a.out.out_dir)?;
    let run = joint_train(&train, &val, &config)?;

    let trace_csv = dir.join("trace.csv");
    let rows: Vec<Vec<String>> = run
        .trace
        .records
        .iter()
        .zip(&run.val_loss)
        .map(|(r, v)| {
            vec![
                r.iter.to_string(),
                num(r.theta),
                num(r.loss),
                num(*v),
                num(r.grad_theta),
                num(r.aux_norm.unwrap_or(f64::NAN)),
            ]
        })
        .collect();
    write_csv(
        &trace_csv,
        &["epoch", "theta", "loss", "val_loss", "grad_theta", "param_norm"],
        &rows,
    )?;
    let checks_csv = dir.join("checks.csv");
    let check_rows: Vec<Vec<String>> = run
        .checks
        .iter()
        .map(|c| {
            vec![
                c.epoch.to_string(),
                num(c.theta),
                num(c.analytic),
                num(c.numeric),
                num(c.rel_error),
                (c.rel_error <= JOINT_CHECK_TOLERANCE).to_string(),
            ]
        })
        .collect();
    write_csv(
        &checks_csv,
        &["epoch", "theta", "analytic", "numeric", "rel_error", "pass"],
        &check_rows,
    )?;

    let correct = val
        .iter()
        .map(|ex| {
            let p = joint_forward(&run.model, &ex.signal, config.hop)?;
            let best = p
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(usize::from(best == ex.label))
        })
        .sum::<Result<usize, Error>>()?;
    let summary = JointSummary {
        final_theta: run.model.theta,
        initial_loss: run.trace.first().map(|r| r.loss).unwrap_or(f64::NAN),
        final_loss: cross_entropy(&run.model, &train, config.hop)?,
        final_val_loss: cross_entropy(&run.model, &val, config.hop)?,
        val_accuracy: correct as f64 / val.len() as f64,
        checks: run.checks.len(),
        worst_check_rel_error: run.checks.iter().map(|c| c.rel_error).fold(0.0, f64::max),
    };
    println!("final theta {}", summary.final_theta);
    println!("train cross-entropy {} -> {}", summary.initial_loss, summary.final_loss);
    println!("validation cross-entropy {}, accuracy {}", summary.final_val_loss, summary.val_accuracy);
    println!(
        "{} theta-gradient checks, worst relative error {:e}",
        summary.checks, summary.worst_check_rel_error
    );
    let manifest = RunManifest {
        command: "joint",
        config: a,
        seed: a.seed,
        artifacts: vec![trace_csv, checks_csv],
        duration_s: seconds(start.elapsed()),
        summary: serde_json::to_value(&summary).unwrap_or_default(),
    };
    manifest.write(&dir)?;
    let checks_ok = run.checks.iter().all(|c| c.rel_error <= JOINT_CHECK_TOLERANCE);
    Ok(if checks_ok { 0 } else { EXIT_FAILURE })
}

pub fn wav_info(a: &WavInfoArgs) -> u8 {
    finish(run_wav_info(a))
}

fn run_wav_info(a: &WavInfoArgs) -> Result<u8, Failure> {
    let s = read_wav_pcm16_mono(&a.path)?;
    println!("path {}", a.path.display());
    println!("sample_rate {}", s.sample_rate());
    println!("samples {}", s.len());
    println!("duration_s {}", s.len() as f64 / s.sample_rate());
    println!("rms {}", s.power().sqrt());
    Ok(0)
}
