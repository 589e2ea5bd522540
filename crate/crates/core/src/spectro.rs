//! Power spectrogram, spectral-centroid frequency estimate, MSE tracking loss,
//! and the backward chain from the loss down to `dL/dtheta`.

use crate::dsp::{Complex, ComplexMatrix};
use crate::error::{Error, Result};
use crate::signals::{frame_truth, TimeSignal};
use crate::stft::{backprop_theta, Variant};
use crate::window::WindowParams;

/// Rows whose total power is at or below this are treated as empty.
pub const DEGENERATE_ROW_POWER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("real matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// `|S|^2`; with `one_sided` only bins `0..=N/2` are kept.
pub fn power_spectrogram(s: &ComplexMatrix, one_sided: bool) -> RealMatrix {
    let cols = if one_sided { s.cols() / 2 + 1 } else { s.cols() };
    let mut p = RealMatrix::zeros(s.rows(), cols);
    for i in 0..s.rows() {
        for (dst, z) in p.row_mut(i).iter_mut().zip(s.row(i)) {
            *dst = z.norm_sqr();
        }
    }
    p
}

/// Cotangent of `|S|^2`: `(2 Re S, 2 Im S) * dL/dP`. Accepts one-sided or
/// full-width `dl_dp`; bins it does not cover get a zero cotangent.
pub fn power_spectrogram_backward(s: &ComplexMatrix, dl_dp: &RealMatrix) -> Result<ComplexMatrix> {
    let n = s.cols();
    if dl_dp.rows() != s.rows() || !(dl_dp.cols() == n || dl_dp.cols() == n / 2 + 1) {
        return Err(Error::ShapeMismatch {
            expected: (s.rows(), n / 2 + 1),
            got: dl_dp.shape(),
        });
    }
    let mut out = ComplexMatrix::zeros(s.rows(), n);
    for i in 0..s.rows() {
        let src = s.row(i);
        for (f, (dst, g)) in out.row_mut(i).iter_mut().zip(dl_dp.row(i)).enumerate() {
            *dst = Complex::new(2.0 * src[f].re * g, 2.0 * src[f].im * g);
        }
    }
    Ok(out)
}

/// Per-row spectral centroid in bin units.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    pub values: Vec<f64>,
    /// Row power sums (the centroid denominators).
    pub totals: Vec<f64>,
    /// Rows with total power at or below [`DEGENERATE_ROW_POWER`]; their
    /// value is `F / 2` and they carry no gradient.
    pub degenerate: Vec<bool>,
}

pub fn centroid_estimate(p: &RealMatrix) -> Centroids {
    let fallback = p.cols() as f64 / 2.0;
    let mut values = Vec::with_capacity(p.rows());
    let mut totals = Vec::with_capacity(p.rows());
    let mut degenerate = Vec::with_capacity(p.rows());
    for i in 0..p.rows() {
        let row = p.row(i);
        let total: f64 = row.iter().sum();
        let moment: f64 = row.iter().enumerate().map(|(f, w)| f as f64 * w).sum();
        let empty = total <= DEGENERATE_ROW_POWER;
        values.push(if empty { fallback } else { moment / total });
        totals.push(total);
        degenerate.push(empty);
    }
    Centroids {
        values,
        totals,
        degenerate,
    }
}

/// `dL/dP[i,f] = dL/dyhat[i] * (f - yhat[i]) / sum_f P[i,f]`.
pub fn centroid_backward(p: &RealMatrix, dl_dyhat: &[f64]) -> Result<RealMatrix> {
    if dl_dyhat.len() != p.rows() {
        return Err(Error::LengthMismatch {
            expected: p.rows(),
            got: dl_dyhat.len(),
        });
    }
    let c = centroid_estimate(p);
    let mut out = RealMatrix::zeros(p.rows(), p.cols());
    for (i, &g) in dl_dyhat.iter().enumerate() {
        if c.degenerate[i] || g == 0.0 {
            continue;
        }
        let scale = g / c.totals[i];
        let y = c.values[i];
        for (f, dst) in out.row_mut(i).iter_mut().enumerate() {
            *dst = scale * (f as f64 - y);
        }
    }
    Ok(out)
}

/// Estimated and true per-frame frequency for one signal, in bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrack {
    pub estimates: Vec<f64>,
    pub truth: Vec<f64>,
    /// Frames that take part in the loss.
    pub included: Vec<bool>,
}

impl FrequencyTrack {
    pub fn new(estimates: Vec<f64>, truth: Vec<f64>) -> Result<Self> {
        if estimates.len() != truth.len() {
            return Err(Error::LengthMismatch {
                expected: estimates.len(),
                got: truth.len(),
            });
        }
        let included = vec![true; estimates.len()];
        Ok(Self {
            estimates,
            truth,
            included,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.estimates.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseLoss {
    pub loss: f64,
    /// `dL/dyhat` per track, zero on excluded frames.
    pub grads: Vec<Vec<f64>>,
}

/// `L = (1/J) sum_j ||yhat_j - ybar_j||^2` over included frames.
pub fn mse_loss(tracks: &[FrequencyTrack]) -> Result<MseLoss> {
    if tracks.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let j = tracks.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(tracks.len());
    for t in tracks {
        if t.truth.len() != t.estimates.len() || t.included.len() != t.estimates.len() {
            return Err(Error::LengthMismatch {
                expected: t.estimates.len(),
                got: t.truth.len().min(t.included.len()),
            });
        }
        let mut g = vec![0.0; t.estimates.len()];
        for (i, slot) in g.iter_mut().enumerate() {
            if !t.included[i] {
                continue;
            }
            let e = t.estimates[i] - t.truth[i];
            loss += e * e;
            *slot = 2.0 * e / j;
        }
        grads.push(g);
    }
    Ok(MseLoss { loss: loss / j, grads })
}

/// A signal and its per-sample instantaneous frequency in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSample {
    pub signal: TimeSignal,
    pub truth_hz: Vec<f64>,
}

impl TrackingSample {
    pub fn new(signal: TimeSignal, truth_hz: Vec<f64>) -> Result<Self> {
        if signal.len() != truth_hz.len() {
            return Err(Error::LengthMismatch {
                expected: signal.len(),
                got: truth_hz.len(),
            });
        }
        Ok(Self { signal, truth_hz })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: f64,
}

struct Forward {
    track: FrequencyTrack,
    power: RealMatrix,
    stft: ComplexMatrix,
    dstft: ComplexMatrix,
    truth_dtheta: Vec<f64>,
}

fn forward_one(sample: &TrackingSample, params: &WindowParams, variant: &Variant, with_grad: bool) -> Result<Forward> {
    let (out, dstft) = if with_grad {
        variant.forward_with_grad(&sample.signal, params)?
    } else {
        let out = variant.forward(&sample.signal, params)?;
        (out, ComplexMatrix::zeros(0, 0))
    };
    let power = power_spectrogram(&out.matrix, true);
    let centroids = centroid_estimate(&power);
    let truth = frame_truth(
        &sample.truth_hz,
        &out.grid,
        params.support_n(),
        sample.signal.sample_rate(),
    )?;
    let included = (0..power.rows())
        .map(|i| i < out.valid_frames && !centroids.degenerate[i])
        .collect();
    let track = FrequencyTrack {
        estimates: centroids.values,
        truth: truth.bins,
        included,
    };
    Ok(Forward {
        track,
        power,
        stft: out.matrix,
        dstft,
        truth_dtheta: truth.dtheta,
    })
}

/// Per-frame centroid estimates against ground truth for one sample.
pub fn tracking_estimates(sample: &TrackingSample, params: &WindowParams, variant: &Variant) -> Result<FrequencyTrack> {
    Ok(forward_one(sample, params, variant, false)?.track)
}

/// Tracking loss over a batch without the gradient.
pub fn theta_loss(batch: &[TrackingSample], params: &WindowParams, variant: &Variant) -> Result<f64> {
    let tracks = batch
        .iter()
        .map(|s| tracking_estimates(s, params, variant))
        .collect::<Result<Vec<_>>>()?;
    Ok(mse_loss(&tracks)?.loss)
}

/// Tracking loss and `dL/dtheta`: STFT -> power -> centroid -> MSE, then
/// back through centroid, power and the STFT taper derivative.
pub fn theta_loss_and_grad(batch: &[TrackingSample], params: &WindowParams, variant: &Variant) -> Result<LossGrad> {
    let forwards = batch
        .iter()
        .map(|s| forward_one(s, params, variant, true))
        .collect::<Result<Vec<_>>>()?;
    let tracks: Vec<FrequencyTrack> = forwards.iter().map(|f| f.track.clone()).collect();
    let mse = mse_loss(&tracks)?;
    let mut grad = 0.0;
    for (fw, dl_dyhat) in forwards.iter().zip(&mse.grads) {
        let dl_dp = centroid_backward(&fw.power, dl_dyhat)?;
        let cot = power_spectrogram_backward(&fw.stft, &dl_dp)?;
        grad += backprop_theta(&cot, &fw.dstft)?;
        // the truth moves with theta when frame positions do
        grad -= dl_dyhat
            .iter()
            .zip(&fw.truth_dtheta)
            .map(|(g, d)| g * d)
            .sum::<f64>();
    }
    Ok(LossGrad {
        loss: mse.loss,
        grad,
    })
}
