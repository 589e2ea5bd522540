//! Frequency tracking: pick `theta` by gradient descent on the centroid MSE,
//! and cross-check against a brute-force sweep of the loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{gd_theta, OptimConfig, OptimTrace};
use crate::signals::{generate, FreqLaw};
use crate::spectro::{theta_loss, theta_loss_and_grad, tracking_estimates, FrequencyTrack, TrackingSample};
use crate::stft::Variant;
use crate::window::WindowParams;

/// Family a dataset's frequency laws are drawn from. Jitters are half-widths
/// of uniform draws around the nominal values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignalFamily {
    Constant {
        freq_hz: f64,
        jitter_hz: f64,
    },
    LinearChirp {
        start_hz: f64,
        end_hz: f64,
    },
    SinusoidalFm {
        carrier_hz: f64,
        carrier_jitter_hz: f64,
        depth_hz: f64,
        rate_hz: f64,
        rate_jitter_hz: f64,
    },
}

impl SignalFamily {
    pub fn draw(&self, rng: &mut ChaCha8Rng, duration_s: f64) -> FreqLaw {
        let mut jitter = |half: f64| {
            if half > 0.0 {
                rng.random_range(-half..half)
            } else {
                0.0
            }
        };
        match *self {
            SignalFamily::Constant { freq_hz, jitter_hz } => FreqLaw::Constant {
                freq_hz: freq_hz + jitter(jitter_hz),
            },
            SignalFamily::LinearChirp { start_hz, end_hz } => FreqLaw::LinearChirp {
                start_hz,
                end_hz,
                duration_s,
            },
            SignalFamily::SinusoidalFm {
                carrier_hz,
                carrier_jitter_hz,
                depth_hz,
                rate_hz,
                rate_jitter_hz,
            } => {
                let carrier_hz = carrier_hz + jitter(carrier_jitter_hz);
                let rate_hz = rate_hz + jitter(rate_jitter_hz);
                let phase = jitter(std::f64::consts::PI);
                FreqLaw::SinusoidalFm {
                    carrier_hz,
                    depth_hz,
                    rate_hz,
                    phase,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingData {
    pub family: SignalFamily,
    pub n_signals: usize,
    pub n_samples: usize,
    pub sample_rate: f64,
    /// `f64::INFINITY` for noiseless signals.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for TrackingData {
    /// Fast sinusoidal FM in white noise: long windows smear the frequency
    /// excursions, short ones spread the tone over many bins.
    fn default() -> Self {
        Self {
            family: SignalFamily::SinusoidalFm {
                carrier_hz: 1500.0,
                carrier_jitter_hz: 200.0,
                depth_hz: 800.0,
                rate_hz: 30.0,
                rate_jitter_hz: 5.0,
            },
            n_signals: 16,
            n_samples: 4096,
            sample_rate: 8000.0,
            snr_db: 10.0,
            seed: 1,
        }
    }
}

impl TrackingData {
    pub fn generate(&self) -> Result<Vec<TrackingSample>> {
        if self.n_signals == 0 {
            return Err(Error::Config("dataset needs at least one signal".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let duration = self.n_samples as f64 / self.sample_rate;
        (0..self.n_signals)
            .map(|_| {
                let law = self.family.draw(&mut rng, duration);
                let noise_seed = rng.random::<u64>();
                let (signal, truth) = generate(&law, self.snr_db, noise_seed, self.sample_rate, self.n_samples)?;
                TrackingSample::new(signal, truth)
            })
            .collect()
    }
}

/// Loss evaluated on a grid of `theta` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub thetas: Vec<f64>,
    pub losses: Vec<f64>,
    pub argmin_theta: f64,
}

impl SweepResult {
    pub fn argmin_index(&self) -> usize {
        self.thetas
            .iter()
            .position(|&t| t == self.argmin_theta)
            .unwrap_or(0)
    }

    /// Spacing of the grid (0 for a single point).
    pub fn step(&self) -> f64 {
        if self.thetas.len() < 2 {
            0.0
        } else {
            (self.thetas[self.thetas.len() - 1] - self.thetas[0]) / (self.thetas.len() - 1) as f64
        }
    }

    /// True when the minimum is strictly inside the grid.
    pub fn has_interior_minimum(&self) -> bool {
        let i = self.argmin_index();
        i > 0 && i + 1 < self.thetas.len()
    }
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive.
pub fn theta_grid(lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(lo <= hi) {
        return Err(Error::Config(format!("grid [{lo}, {hi}] with {steps} steps")));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let d = (hi - lo) / (steps - 1) as f64;
    Ok((0..steps).map(|i| if i + 1 == steps { hi } else { lo + d * i as f64 }).collect())
}

/// Forward-only loss at each grid point.
pub fn sweep_loss(batch: &[TrackingSample], thetas: &[f64], base: &WindowParams, variant: &Variant) -> Result<SweepResult> {
    if thetas.is_empty() {
        return Err(Error::Config("empty theta grid".into()));
    }
    let losses = thetas
        .iter()
        .map(|&t| theta_loss(batch, &base.with_theta(t)?, variant))
        .collect::<Result<Vec<_>>>()?;
    let best = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(SweepResult {
        thetas: thetas.to_vec(),
        losses,
        argmin_theta: thetas[best],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSetup {
    pub support_n: usize,
    pub variant: Variant,
    pub theta0: f64,
    pub sweep_steps: usize,
}

impl Default for TrackingSetup {
    fn default() -> Self {
        Self {
            support_n: 128,
            variant: Variant::FixedSize { hop: 32 },
            theta0: 4.0,
            sweep_steps: 64,
        }
    }
}

/// Default descent settings for [`TrackingData::default`].
pub fn default_tracking_optim(support_n: usize) -> OptimConfig {
    OptimConfig {
        learning_rate: 3.0,
        max_iters: 500,
        theta_min: crate::window::DEFAULT_THETA_MIN,
        theta_max: support_n as f64,
        tolerance: 1e-4,
        seed: 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub trace: OptimTrace,
    /// Final estimates for the first signal of the dataset.
    pub track: FrequencyTrack,
    pub sweep: SweepResult,
}

/// Gradient descent on `theta`, final estimates, and a verification sweep
/// over `[theta_min, theta_max]`.
pub fn run_tracking(data: &TrackingData, setup: &TrackingSetup, optim: &OptimConfig) -> Result<TrackingRun> {
    let batch = data.generate()?;
    let base = WindowParams::with_bounds(setup.support_n, optim.theta_min, optim.theta_min, optim.theta_max)?;
    let trace = gd_theta(
        |theta| {
            let lg = theta_loss_and_grad(&batch, &base.with_theta(theta)?, &setup.variant)?;
            Ok((lg.loss, lg.grad))
        },
        setup.theta0,
        optim,
    )?;
    let final_theta = trace.final_theta().unwrap_or(setup.theta0);
    let track = tracking_estimates(&batch[0], &base.with_theta(final_theta)?, &setup.variant)?;
    let grid = theta_grid(optim.theta_min, optim.theta_max, setup.sweep_steps)?;
    let sweep = sweep_loss(&batch, &grid, &base, &setup.variant)?;
    Ok(TrackingRun { trace, track, sweep })
}
