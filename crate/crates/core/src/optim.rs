//! Projected gradient descent on `theta` and the finite-difference
//! gradient-check harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{Complex, ComplexMatrix};
use crate::error::{Error, Result};
use crate::signals::{generate, FreqLaw, TimeSignal};
use crate::spectro::{power_spectrogram, theta_loss, theta_loss_and_grad, TrackingSample};
use crate::stft::{backprop_theta, Variant};
use crate::window::WindowParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Stop once a step moves `theta` by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.theta_min <= self.theta_max) {
            return Err(Error::Config(format!(
                "theta bounds [{}, {}]",
                self.theta_min, self.theta_max
            )));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("tolerance {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub theta: f64,
    pub loss: f64,
    pub grad_theta: f64,
    /// Norm of any other parameters optimized alongside `theta`.
    pub aux_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimTrace {
    pub records: Vec<TraceRecord>,
    pub stop: StopReason,
}

impl OptimTrace {
    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_theta(&self) -> Option<f64> {
        self.last().map(|r| r.theta)
    }
}

/// Projected gradient descent: `theta <- clamp(theta - lr * dtheta)`.
///
/// Every evaluated point is recorded, so the trace holds at most
/// `max_iters + 1` records. A non-finite loss or gradient aborts with
/// [`Error::NonFiniteLoss`] carrying the partial trace.
pub fn gd_theta<F>(mut loss_and_grad: F, theta0: f64, config: &OptimConfig) -> Result<OptimTrace>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    config.validate()?;
    let mut theta = theta0.clamp(config.theta_min, config.theta_max);
    let mut records = Vec::new();
    for iter in 0..=config.max_iters {
        let (loss, grad) = loss_and_grad(theta)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter,
                partial: Box::new(OptimTrace {
                    records,
                    stop: StopReason::MaxIters,
                }),
            });
        }
        records.push(TraceRecord {
            iter,
            theta,
            loss,
            grad_theta: grad,
            aux_norm: None,
        });
        if iter == config.max_iters {
            break;
        }
        let next = (theta - config.learning_rate * grad).clamp(config.theta_min, config.theta_max);
        if (next - theta).abs() < config.tolerance {
            return Ok(OptimTrace {
                records,
                stop: StopReason::Converged,
            });
        }
        theta = next;
    }
    Ok(OptimTrace {
        records,
        stop: StopReason::MaxIters,
    })
}

/// Central difference `(f(x + eps) - f(x - eps)) / (2 eps)`.
pub fn finite_diff<F>(mut f: F, theta: f64, epsilon: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon {epsilon}")));
    }
    Ok((f(theta + epsilon)? - f(theta - epsilon)?) / (2.0 * epsilon))
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps the ratio meaningful
/// when both gradients vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-8;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Scalar losses the harness can differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckLoss {
    /// `sum |S|^2`.
    PowerSum,
    /// Fixed random linear functional `sum Re(S) r + Im(S) q`; sensitive to
    /// phase, unlike the power sum.
    Projection,
    /// Centroid tracking MSE on a seeded FM batch.
    Tracking,
}

impl CheckLoss {
    pub fn name(&self) -> &'static str {
        match self {
            CheckLoss::PowerSum => "power-sum",
            CheckLoss::Projection => "projection",
            CheckLoss::Tracking => "tracking",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub name: String,
    pub loss: CheckLoss,
    pub variant: Variant,
    pub support_n: usize,
    pub signal_len: usize,
    pub theta: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Also require the two one-sided quotients to agree with the analytic
    /// value (used at breakpoints).
    pub one_sided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub case: String,
    pub variant: &'static str,
    pub theta: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub pass: bool,
}

/// Seeded white Gaussian noise with unit variance.
pub fn random_signal(len: usize, seed: u64) -> TimeSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    TimeSignal::new(samples, 1.0).expect("finite samples")
}

fn random_cotangent(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let data = (0..rows * cols)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    ComplexMatrix::from_vec(rows, cols, data).expect("shape")
}

fn tracking_batch(case: &GradCheckCase) -> Result<Vec<TrackingSample>> {
    let fs = 8000.0;
    (0..4u64)
        .map(|j| {
            let law = FreqLaw::SinusoidalFm {
                carrier_hz: 1500.0 + 100.0 * j as f64,
                depth_hz: 600.0,
                rate_hz: 6.0 + j as f64,
                phase: 0.7 * j as f64,
            };
            let (signal, truth) = generate(&law, 10.0, case.seed.wrapping_add(j), fs, case.signal_len)?;
            TrackingSample::new(signal, truth)
        })
        .collect()
}

/// Scalar loss of one case at `theta`, optionally with its analytic gradient.
struct CaseLoss {
    case: GradCheckCase,
    signal: TimeSignal,
    batch: Vec<TrackingSample>,
    cotangent: Option<ComplexMatrix>,
}

impl CaseLoss {
    fn new(case: &GradCheckCase) -> Result<Self> {
        let signal = random_signal(case.signal_len, case.seed);
        let batch = if case.loss == CheckLoss::Tracking {
            tracking_batch(case)?
        } else {
            Vec::new()
        };
        let mut me = Self {
            case: case.clone(),
            signal,
            batch,
            cotangent: None,
        };
        if case.loss == CheckLoss::Projection {
            let params = me.params(case.theta)?;
            let rows = case.variant.grid(case.signal_len, &params)?.len();
            me.cotangent = Some(random_cotangent(rows, case.support_n, case.seed));
        }
        Ok(me)
    }

    fn params(&self, theta: f64) -> Result<WindowParams> {
        WindowParams::new(self.case.support_n, theta)
    }

    fn value(&self, theta: f64) -> Result<f64> {
        let params = self.params(theta)?;
        match self.case.loss {
            CheckLoss::PowerSum => {
                let s = self.case.variant.forward(&self.signal, &params)?.matrix;
                Ok(power_spectrogram(&s, false).data().iter().sum())
            }
            CheckLoss::Projection => {
                let s = self.case.variant.forward(&self.signal, &params)?.matrix;
                let cot = self.cotangent.as_ref().expect("projection cotangent");
                cot.check_shape(&s)?;
                Ok(cot.data().iter().zip(s.data()).map(|(c, z)| c.re * z.re + c.im * z.im).sum())
            }
            CheckLoss::Tracking => theta_loss(&self.batch, &params, &self.case.variant),
        }
    }

    fn analytic(&self, theta: f64) -> Result<f64> {
        let params = self.params(theta)?;
        match self.case.loss {
            CheckLoss::PowerSum => {
                let (out, ds) = self.case.variant.forward_with_grad(&self.signal, &params)?;
                let cot = ComplexMatrix::from_vec(
                    out.matrix.rows(),
                    out.matrix.cols(),
                    out.matrix.data().iter().map(|z| z * 2.0).collect(),
                )?;
                backprop_theta(&cot, &ds)
            }
            CheckLoss::Projection => {
                let (_, ds) = self.case.variant.forward_with_grad(&self.signal, &params)?;
                backprop_theta(self.cotangent.as_ref().expect("projection cotangent"), &ds)
            }
            CheckLoss::Tracking => Ok(theta_loss_and_grad(&self.batch, &params, &self.case.variant)?.grad),
        }
    }
}

fn run_case(case: &GradCheckCase, corrupt: f64) -> Result<GradCheckRow> {
    let loss = CaseLoss::new(case)?;
    let analytic = loss.analytic(case.theta)? * corrupt;
    let numeric = finite_diff(|t| loss.value(t), case.theta, case.epsilon)?;
    let mut rel = relative_error(analytic, numeric);
    if case.one_sided {
        // second-order one-sided stencils
        let h = case.epsilon;
        let t = case.theta;
        let at = loss.value(t)?;
        let above = (4.0 * loss.value(t + h)? - 3.0 * at - loss.value(t + 2.0 * h)?) / (2.0 * h);
        let below = (3.0 * at - 4.0 * loss.value(t - h)? + loss.value(t - 2.0 * h)?) / (2.0 * h);
        rel = rel
            .max(relative_error(analytic, above))
            .max(relative_error(analytic, below))
            .max(relative_error(above, below));
    }
    Ok(GradCheckRow {
        case: case.name.clone(),
        variant: case.variant.name(),
        theta: case.theta,
        analytic,
        numeric,
        rel_error: rel,
        pass: rel <= case.tolerance,
    })
}

/// Runs every case. `corrupt` scales the analytic gradient (1.0 for a real
/// check); case setup errors are reported as failing rows with NaN values.
pub fn gradcheck_report(cases: &[GradCheckCase], corrupt: f64) -> Vec<GradCheckRow> {
    cases
        .iter()
        .map(|case| {
            run_case(case, corrupt).unwrap_or_else(|_| GradCheckRow {
                case: case.name.clone(),
                variant: case.variant.name(),
                theta: case.theta,
                analytic: f64::NAN,
                numeric: f64::NAN,
                rel_error: f64::NAN,
                pass: false,
            })
        })
        .collect()
}

/// Breakpoints `theta = p / (i alpha)` inside `[lo, hi]`, at most `limit` of them.
pub fn breakpoints(alpha: f64, rows: usize, lo: f64, hi: f64, limit: usize) -> Vec<(usize, u64, f64)> {
    let mut out = Vec::new();
    for i in 1..rows {
        let rate = i as f64 * alpha;
        let p_lo = (lo * rate).ceil() as u64;
        let p_hi = (hi * rate).floor() as u64;
        for p in p_lo..=p_hi {
            out.push((i, p, p as f64 / rate));
            if out.len() >= limit {
                return out;
            }
        }
    }
    out
}

fn dist_to_int(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Smallest distance of `i * alpha * theta` to an integer over rows `1..rows`.
pub fn breakpoint_distance(alpha: f64, theta: f64, rows: usize) -> f64 {
    (1..rows)
        .map(|i| dist_to_int(i as f64 * alpha * theta))
        .fold(f64::INFINITY, f64::min)
}

/// First `theta >= start` (scanning in steps of `1/1024`) at which no live
/// fixed-overlap row sits within `margin` of a breakpoint and no taper edge
/// crosses a sample within `+-fd_epsilon` of `theta`. The taper is only C1 at
/// its edges, so entry-wise finite differences need both.
pub fn clean_overlap_theta(
    alpha: f64,
    start: f64,
    support_n: usize,
    signal_len: usize,
    margin: f64,
    fd_epsilon: f64,
) -> Result<f64> {
    let base = WindowParams::new(support_n, start)?;
    let mut theta = start;
    while theta <= base.theta_max() {
        let params = base.with_theta(theta)?;
        let grid = crate::stft::FrameGrid::fixed_overlap(alpha, &params, signal_len)?;
        let rows = grid.valid_frames();
        let offset = (theta - support_n as f64 + 1.0) / 2.0;
        let clear = breakpoint_distance(alpha, theta, rows) > margin
            && (0..rows).all(|i| {
                // edges move by (i*alpha - 1/2) and (i*alpha + 1/2) samples per unit theta
                let room = 4.0 * fd_epsilon * (i as f64 * alpha + 0.5);
                let lead = grid.shift(i) - offset;
                dist_to_int(lead) > room && dist_to_int(lead + theta) > room
            });
        if clear {
            return Ok(theta);
        }
        theta += 1.0 / 1024.0;
    }
    Err(Error::Config(format!("no clean theta above {start}")))
}

/// Fixed-size, fixed-overlap, near-breakpoint and end-to-end tracking cases.
pub fn default_suite(seed: u64) -> Vec<GradCheckCase> {
    let mut cases = Vec::new();
    let fixed = Variant::FixedSize { hop: 16 };
    let overlap = Variant::FixedOverlap { alpha: 0.5 };
    for (j, &theta) in [8.3f64, 17.0, 31.9, 63.0].iter().enumerate() {
        // odd integer theta puts the taper edges exactly on samples, where the
        // linear projection loss is only C1; the power sum is smooth there
        let projection_theta = if theta.fract() == 0.0 { theta - 0.3 } else { theta };
        for (loss, theta) in [(CheckLoss::PowerSum, theta), (CheckLoss::Projection, projection_theta)] {
            cases.push(GradCheckCase {
                name: format!("fixed-size/{}/{j}", loss.name()),
                loss,
                variant: fixed,
                support_n: 64,
                signal_len: 512,
                theta,
                seed: seed.wrapping_add(j as u64),
                epsilon: 1e-4,
                tolerance: 1e-5,
                one_sided: false,
            });
        }
    }
    for (j, &start) in [8.3, 17.1, 31.9, 52.7].iter().enumerate() {
        let theta = clean_overlap_theta(0.5, start, 64, 512, 1e-3, 1e-5).unwrap_or(start);
        for loss in [CheckLoss::PowerSum, CheckLoss::Projection] {
            cases.push(GradCheckCase {
                name: format!("fixed-overlap/{}/{j}", loss.name()),
                loss,
                variant: overlap,
                support_n: 64,
                signal_len: 512,
                theta,
                seed: seed.wrapping_add(100 + j as u64),
                epsilon: 1e-5,
                tolerance: 1e-4,
                one_sided: false,
            });
        }
    }
    let mut bps = breakpoints(0.5, 8, 8.0, 58.0, 256);
    bps.sort_by(|a, b| a.2.total_cmp(&b.2));
    bps.dedup_by(|a, b| (a.2 - b.2).abs() < 1e-9);
    let stride = (bps.len() / 4).max(1);
    for (j, (i, p, theta)) in bps.into_iter().step_by(stride).take(4).enumerate() {
        cases.push(GradCheckCase {
            name: format!("breakpoint/i{i}-p{p}"),
            loss: CheckLoss::Projection,
            variant: overlap,
            support_n: 64,
            signal_len: 512,
            theta,
            seed: seed.wrapping_add(200 + j as u64),
            epsilon: 1e-6,
            tolerance: 1e-4,
            one_sided: true,
        });
    }
    for (j, &theta) in [12.4, 40.2].iter().enumerate() {
        cases.push(GradCheckCase {
            name: format!("tracking/fixed-size/{j}"),
            loss: CheckLoss::Tracking,
            variant: Variant::FixedSize { hop: 32 },
            support_n: 128,
            signal_len: 2048,
            theta,
            seed: seed.wrapping_add(300 + j as u64),
            epsilon: 1e-4,
            tolerance: 1e-5,
            one_sided: false,
        });
    }
    for (j, &start) in [14.3, 37.9].iter().enumerate() {
        let alpha = 0.5;
        let theta = clean_overlap_theta(alpha, start, 128, 2048, 1e-3, 1e-5).unwrap_or(start);
        cases.push(GradCheckCase {
            name: format!("tracking/fixed-overlap/{j}"),
            loss: CheckLoss::Tracking,
            variant: Variant::FixedOverlap { alpha },
            support_n: 128,
            signal_len: 2048,
            theta,
            seed: seed.wrapping_add(400 + j as u64),
            epsilon: 1e-5,
            tolerance: 1e-4,
            one_sided: false,
        });
    }
    cases
}
