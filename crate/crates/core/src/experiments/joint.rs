//! Joint training of `theta` with a linear softmax classifier on pooled
//! power spectra.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::ComplexMatrix;
use crate::error::{Error, Result};
use crate::optim::{relative_error, OptimTrace, StopReason, TraceRecord};
use crate::signals::{generate, FreqLaw, TimeSignal};
use crate::spectro::{power_spectrogram, power_spectrogram_backward, RealMatrix};
use crate::stft::{backprop_theta, Variant};
use crate::window::{WindowParams, DEFAULT_THETA_MIN};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSignal {
    pub signal: TimeSignal,
    pub label: usize,
}

/// Two or more classes of sinusoidal FM in white noise. The class sets the
/// carrier; modulation rate and phase are drawn per signal. The default
/// carriers sit closer than one bin apart, so telling them apart needs long
/// windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FmClassData {
    pub class_carrier_hz: Vec<f64>,
    pub depth_hz: f64,
    pub rate_lo_hz: f64,
    pub rate_hi_hz: f64,
    pub snr_db: f64,
    pub n_per_class: usize,
    pub n_samples: usize,
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for FmClassData {
    fn default() -> Self {
        Self {
            class_carrier_hz: vec![1500.0, 1530.0],
            depth_hz: 10.0,
            rate_lo_hz: 2.0,
            rate_hi_hz: 8.0,
            snr_db: 0.0,
            n_per_class: 32,
            n_samples: 1024,
            sample_rate: 8000.0,
            seed: 1,
        }
    }
}

impl FmClassData {
    pub fn classes(&self) -> usize {
        self.class_carrier_hz.len()
    }

    fn validate(&self) -> Result<()> {
        if self.classes() < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes())));
        }
        if self.n_per_class == 0 {
            return Err(Error::Config("empty dataset".into()));
        }
        if !(self.rate_lo_hz > 0.0 && self.rate_lo_hz <= self.rate_hi_hz) {
            return Err(Error::Config(format!(
                "modulation rates [{}, {}]",
                self.rate_lo_hz, self.rate_hi_hz
            )));
        }
        Ok(())
    }

    /// Class-balanced set drawn from stream `stream` of the seeded generator.
    fn draw(&self, stream: u64) -> Result<Vec<LabeledSignal>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let mut out = Vec::with_capacity(self.n_per_class * self.classes());
        for _ in 0..self.n_per_class {
            for (label, &carrier_hz) in self.class_carrier_hz.iter().enumerate() {
                let law = FreqLaw::SinusoidalFm {
                    carrier_hz,
                    depth_hz: self.depth_hz,
                    rate_hz: rng.random_range(self.rate_lo_hz..=self.rate_hi_hz),
                    phase: rng.random_range(0.0..2.0 * PI),
                };
                let (signal, _) = generate(&law, self.snr_db, rng.random(), self.sample_rate, self.n_samples)?;
                out.push(LabeledSignal { signal, label });
            }
        }
        Ok(out)
    }

    /// Training and validation sets from disjoint generator streams.
    pub fn split(&self) -> Result<(Vec<LabeledSignal>, Vec<LabeledSignal>)> {
        Ok((self.draw(0)?, self.draw(1)?))
    }
}

/// Linear softmax classifier over `support_n / 2 + 1` pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    /// Row-major, features x classes.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub theta: f64,
    pub support_n: usize,
    pub classes: usize,
}

impl JointModel {
    pub fn zeros(support_n: usize, classes: usize, theta: f64) -> Result<Self> {
        let m = Self {
            weights: vec![0.0; (support_n / 2 + 1) * classes],
            bias: vec![0.0; classes],
            theta,
            support_n,
            classes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn features(&self) -> usize {
        self.support_n / 2 + 1
    }

    pub fn weight(&self, feature: usize, class: usize) -> f64 {
        self.weights[feature * self.classes + class]
    }

    pub fn set_weight(&mut self, feature: usize, class: usize, v: f64) {
        self.weights[feature * self.classes + class] = v;
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.weights.len() != self.features() * self.classes || self.bias.len() != self.classes {
            return Err(Error::ShapeMismatch {
                expected: (self.features(), self.classes),
                got: (self.weights.len() / self.classes.max(1), self.bias.len()),
            });
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidTheta(self.theta));
        }
        Ok(())
    }

    fn norm(&self) -> f64 {
        self.weights.iter().chain(&self.bias).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (f, x) in features.iter().enumerate() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += x * self.weight(f, c);
            }
        }
        z
    }
}

/// Average of the first `valid` rows.
pub fn mean_pool(p: &RealMatrix, valid: usize) -> Result<Vec<f64>> {
    if valid == 0 || valid > p.rows() {
        return Err(Error::InvalidGrid(format!("{valid} valid frames of {}", p.rows())));
    }
    let mut out = vec![0.0; p.cols()];
    for i in 0..valid {
        for (o, v) in out.iter_mut().zip(p.row(i)) {
            *o += v;
        }
    }
    let scale = 1.0 / valid as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(out)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Mean-pooled one-sided power divided by its own average over bins, minus
/// one. White noise maps near zero at every `theta` and the signal's level
/// drops out, leaving only spectral shape.
struct Pooled {
    features: Vec<f64>,
    raw: Vec<f64>,
    level: f64,
    s: ComplexMatrix,
    ds: Option<ComplexMatrix>,
    valid: usize,
}

fn pooled(signal: &TimeSignal, params: &WindowParams, hop: usize, with_grad: bool) -> Result<Pooled> {
    let variant = Variant::FixedSize { hop };
    let (out, ds) = if with_grad {
        let (o, g) = variant.forward_with_grad(signal, params)?;
        (o, Some(g))
    } else {
        (variant.forward(signal, params)?, None)
    };
    let p = power_spectrogram(&out.matrix, true);
    let raw = mean_pool(&p, out.valid_frames)?;
    let level = raw.iter().sum::<f64>() / raw.len() as f64;
    if !(level > 0.0) {
        return Err(Error::InvalidSignal("no energy inside any frame".into()));
    }
    let features = raw.iter().map(|v| v / level - 1.0).collect();
    Ok(Pooled {
        features,
        raw,
        level,
        s: out.matrix,
        ds,
        valid: out.valid_frames,
    })
}

impl Pooled {
    /// `dL/dtheta` given `dL/dfeatures`.
    fn backward(&self, dl_df: &[f64]) -> Result<f64> {
        let ds = self.ds.as_ref().ok_or(Error::Config("forward ran without gradient".into()))?;
        let cols = dl_df.len();
        let through_level =
            dl_df.iter().zip(&self.raw).map(|(g, r)| g * r).sum::<f64>() / (self.level * self.level * cols as f64);
        let mut dl_dp = RealMatrix::zeros(self.s.rows(), cols);
        let scale = 1.0 / self.valid as f64;
        for i in 0..self.valid {
            for (dst, g) in dl_dp.row_mut(i).iter_mut().zip(dl_df) {
                *dst = (g / self.level - through_level) * scale;
            }
        }
        let cot = power_spectrogram_backward(&self.s, &dl_dp)?;
        backprop_theta(&cot, ds)
    }
}

fn model_params(model: &JointModel) -> Result<WindowParams> {
    WindowParams::with_bounds(model.support_n, model.theta, DEFAULT_THETA_MIN, model.support_n as f64)
}

/// Class probabilities for one signal.
pub fn joint_forward(model: &JointModel, signal: &TimeSignal, hop: usize) -> Result<Vec<f64>> {
    model.validate()?;
    let pooled = pooled(signal, &model_params(model)?, hop, false)?;
    Ok(softmax(&model.logits(&pooled.features)))
}

/// Mean cross-entropy over `data`.
pub fn cross_entropy(model: &JointModel, data: &[LabeledSignal], hop: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut total = 0.0;
    for ex in data {
        let p = joint_forward(model, &ex.signal, hop)?;
        total -= p[ex.label].ln();
    }
    Ok(total / data.len() as f64)
}

/// Mean cross-entropy with gradients for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGrad {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub theta: f64,
}

pub fn cross_entropy_and_grad(model: &JointModel, data: &[LabeledSignal], hop: usize) -> Result<JointGrad> {
    model.validate()?;
    if data.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let params = model_params(model)?;
    let c = model.classes;
    let mut g = JointGrad {
        loss: 0.0,
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; c],
        theta: 0.0,
    };
    for ex in data {
        if ex.label >= c {
            return Err(Error::Config(format!("label {} with {} classes", ex.label, c)));
        }
        let pooled = pooled(&ex.signal, &params, hop, true)?;
        let mut delta = softmax(&model.logits(&pooled.features));
        g.loss -= delta[ex.label].ln();
        delta[ex.label] -= 1.0;
        let mut dl_df = vec![0.0; pooled.features.len()];
        for (f, x) in pooled.features.iter().enumerate() {
            for (k, d) in delta.iter().enumerate() {
                g.weights[f * c + k] += x * d;
                dl_df[f] += model.weight(f, k) * d;
            }
        }
        g.bias.iter_mut().zip(&delta).for_each(|(b, d)| *b += d);
        g.theta += pooled.backward(&dl_df)?;
    }
    let m = 1.0 / data.len() as f64;
    g.loss *= m;
    g.theta *= m;
    g.weights.iter_mut().chain(g.bias.iter_mut()).for_each(|v| *v *= m);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    pub support_n: usize,
    pub hop: usize,
    pub theta0: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub epochs: usize,
    pub lr_weights: f64,
    pub lr_theta: f64,
    /// Finite-difference check of the `theta` gradient every this many epochs
    /// (0 disables).
    pub check_every: usize,
    pub check_epsilon: f64,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            support_n: 128,
            hop: 32,
            theta0: 8.0,
            theta_min: DEFAULT_THETA_MIN,
            theta_max: 128.0,
            epochs: 300,
            lr_weights: 0.01,
            lr_theta: 2000.0,
            check_every: 10,
            check_epsilon: 1e-5,
        }
    }
}

/// One finite-difference check of the `theta` gradient during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCheck {
    pub epoch: usize,
    pub theta: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointRun {
    /// One record per epoch; `aux_norm` is the classifier parameter norm.
    pub trace: OptimTrace,
    /// Validation cross-entropy per epoch, aligned with `trace.records`.
    pub val_loss: Vec<f64>,
    pub checks: Vec<ThetaCheck>,
    pub model: JointModel,
}

/// Full-batch gradient descent on weights, bias and `theta` together.
/// Records the state before each update, so `epochs` updates give
/// `epochs + 1` records.
pub fn joint_train(train: &[LabeledSignal], val: &[LabeledSignal], config: &JointConfig) -> Result<JointRun> {
    let classes = train.iter().map(|e| e.label + 1).max().unwrap_or(0);
    let distinct = {
        let mut seen = vec![false; classes];
        train.iter().for_each(|e| seen[e.label] = true);
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(Error::Config(format!("training set has {distinct} distinct classes")));
    }
    if !(config.theta_min <= config.theta_max) || !(config.lr_weights > 0.0) || !(config.lr_theta >= 0.0) {
        return Err(Error::Config("joint training configuration".into()));
    }
    let theta0 = config.theta0.clamp(config.theta_min, config.theta_max);
    let mut model = JointModel::zeros(config.support_n, classes, theta0)?;
    let mut records = Vec::with_capacity(config.epochs + 1);
    let mut val_loss = Vec::with_capacity(config.epochs + 1);
    let mut checks = Vec::new();
    for epoch in 0..=config.epochs {
        let g = cross_entropy_and_grad(&model, train, config.hop)?;
        if !g.loss.is_finite() || !g.theta.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: epoch,
                partial: Box::new(OptimTrace {
                    records,
                    stop: StopReason::MaxIters,
                }),
            });
        }
        records.push(TraceRecord {
            iter: epoch,
            theta: model.theta,
            loss: g.loss,
            grad_theta: g.theta,
            aux_norm: Some(model.norm()),
        });
        val_loss.push(if val.is_empty() {
            f64::NAN
        } else {
            cross_entropy(&model, val, config.hop)?
        });
        if config.check_every > 0 && epoch % config.check_every == 0 {
            let eps = config.check_epsilon;
            let at = |t: f64| {
                let m = JointModel { theta: t, ..model.clone() };
                cross_entropy(&m, train, config.hop)
            };
            let t = model.theta;
            // One-sided second-order stencils keep evaluations inside the bounds.
            let numeric = if t - eps < config.theta_min {
                (4.0 * at(t + eps)? - 3.0 * at(t)? - at(t + 2.0 * eps)?) / (2.0 * eps)
            } else if t + eps > config.theta_max {
                (3.0 * at(t)? - 4.0 * at(t - eps)? + at(t - 2.0 * eps)?) / (2.0 * eps)
            } else {
                (at(t + eps)? - at(t - eps)?) / (2.0 * eps)
            };
            checks.push(ThetaCheck {
                epoch,
                theta: model.theta,
                analytic: g.theta,
                numeric,
                rel_error: relative_error(g.theta, numeric),
            });
        }
        if epoch == config.epochs {
            break;
        }
        model.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= config.lr_weights * d);
        model.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= config.lr_weights * d);
        model.theta = (model.theta - config.lr_theta * g.theta).clamp(config.theta_min, config.theta_max);
    }
    Ok(JointRun {
        trace: OptimTrace {
            records,
            stop: StopReason::MaxIters,
        },
        val_loss,
        checks,
        model,
    })
}
