//! Sampled signals: seeded synthetic generation and 16-bit PCM WAV ingestion.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stft::FrameGrid;

/// Real-valued sampled signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSignal("no samples".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample rate {sample_rate}")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("signal samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Zero-padded read: indices outside the signal return 0.
    #[inline]
    pub fn sample(&self, index: i64) -> f64 {
        if index < 0 {
            0.0
        } else {
            self.samples.get(index as usize).copied().unwrap_or(0.0)
        }
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Instantaneous-frequency law of a synthetic tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreqLaw {
    Constant {
        freq_hz: f64,
    },
    /// Linear sweep from `start_hz` at t = 0 to `end_hz` at t = `duration_s`.
    LinearChirp {
        start_hz: f64,
        end_hz: f64,
        duration_s: f64,
    },
    /// `carrier + depth * sin(2 pi rate t + phase)`.
    SinusoidalFm {
        carrier_hz: f64,
        depth_hz: f64,
        rate_hz: f64,
        phase: f64,
    },
}

impl FreqLaw {
    pub fn freq_at(&self, t: f64) -> f64 {
        match *self {
            FreqLaw::Constant { freq_hz } => freq_hz,
            FreqLaw::LinearChirp {
                start_hz,
                end_hz,
                duration_s,
            } => start_hz + (end_hz - start_hz) * t / duration_s,
            FreqLaw::SinusoidalFm {
                carrier_hz,
                depth_hz,
                rate_hz,
                phase,
            } => carrier_hz + depth_hz * (2.0 * PI * rate_hz * t + phase).sin(),
        }
    }

    /// Checks the law stays inside `(0, fs/2)` over `n_samples` samples.
    pub fn validate(&self, sample_rate: f64, n_samples: usize) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        let span = n_samples.saturating_sub(1) as f64 / sample_rate;
        let (lo, hi) = match *self {
            FreqLaw::Constant { freq_hz } => (freq_hz, freq_hz),
            FreqLaw::LinearChirp { duration_s, .. } => {
                if !(duration_s > 0.0) {
                    return Err(Error::Config(format!("chirp duration {duration_s}")));
                }
                let a = self.freq_at(0.0);
                let b = self.freq_at(span);
                (a.min(b), a.max(b))
            }
            FreqLaw::SinusoidalFm {
                carrier_hz,
                depth_hz,
                ..
            } => (carrier_hz - depth_hz.abs(), carrier_hz + depth_hz.abs()),
        };
        for f in [lo, hi] {
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::NyquistViolation { freq: f, nyquist });
            }
        }
        Ok(())
    }
}

/// Generates `sin(phi[t]) + noise` with phase accumulated from the law, and the
/// per-sample instantaneous frequency in Hz.
///
/// The tone has power 1/2; noise is white Gaussian with variance chosen so that
/// tone power over noise power equals `snr_db`. Pass `f64::INFINITY` for a
/// noiseless signal. Noise comes from ChaCha8 seeded with `seed`, mapped to
/// normals by the Ziggurat method (`rand_distr::StandardNormal`).
pub fn generate(
    law: &FreqLaw,
    snr_db: f64,
    seed: u64,
    sample_rate: f64,
    n_samples: usize,
) -> Result<(TimeSignal, Vec<f64>)> {
    if n_samples == 0 {
        return Err(Error::InvalidSignal("no samples requested".into()));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::InvalidSignal(format!("sample rate {sample_rate}")));
    }
    if snr_db.is_nan() {
        return Err(Error::Config("snr is NaN".into()));
    }
    law.validate(sample_rate, n_samples)?;

    let truth: Vec<f64> = (0..n_samples)
        .map(|t| law.freq_at(t as f64 / sample_rate))
        .collect();
    let mut samples = Vec::with_capacity(n_samples);
    let mut phase = 0.0f64;
    for f in &truth {
        samples.push(phase.sin());
        phase += 2.0 * PI * f / sample_rate;
        phase %= 2.0 * PI;
    }
    if snr_db.is_finite() {
        let noise_std = (0.5 / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in samples.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += noise_std * z;
        }
    }
    Ok((TimeSignal::new(samples, sample_rate)?, truth))
}

/// Ground truth aligned to the frames of a grid, in bin units.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub bins: Vec<f64>,
    /// Derivative of each value with respect to `theta` (nonzero only when
    /// frame positions move with `theta`).
    pub dtheta: Vec<f64>,
}

/// Instantaneous frequency at each frame center `position_i + (N - 1) / 2`,
/// linearly interpolated between samples and converted to bins (`* N / fs`).
/// Centers past either end of the signal take the nearest sample's value.
pub fn frame_truth(
    truth_hz: &[f64],
    grid: &FrameGrid,
    support_n: usize,
    sample_rate: f64,
) -> Result<FrameTruth> {
    if truth_hz.is_empty() {
        return Err(Error::InvalidSignal("empty ground truth".into()));
    }
    let to_bins = support_n as f64 / sample_rate;
    let last = truth_hz.len() - 1;
    let half = (support_n as f64 - 1.0) / 2.0;
    let mut bins = Vec::with_capacity(grid.len());
    let mut dtheta = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let center = grid.position(i) + half;
        let (value, slope) = if center <= 0.0 {
            (truth_hz[0], 0.0)
        } else if center >= last as f64 {
            (truth_hz[last], 0.0)
        } else {
            let k = center.floor() as usize;
            let frac = center - k as f64;
            let slope = truth_hz[k + 1] - truth_hz[k];
            (truth_hz[k] + frac * slope, slope)
        };
        bins.push(value * to_bins);
        dtheta.push(slope * grid.position_dtheta(i) * to_bins);
    }
    Ok(FrameTruth { bins, dtheta })
}

pub fn read_wav_pcm16_mono(path: impl AsRef<Path>) -> Result<TimeSignal> {
    let bytes = std::fs::read(path)?;
    parse_wav_pcm16_mono(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a RIFF/WAVE byte buffer holding mono 16-bit PCM. Samples are scaled
/// by 1/32768.
pub fn parse_wav_pcm16_mono(bytes: &[u8]) -> Result<TimeSignal> {
    if bytes.len() < 12 {
        return Err(Error::MalformedHeader("shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE tags".into()));
    }
    let mut pos = 12;
    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::MalformedHeader(format!(
                    "chunk {:?} overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::MalformedHeader("fmt chunk too short".into()));
                }
                let format = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                if format != 1 {
                    return Err(Error::UnsupportedFormat(format!("audio format {format}")));
                }
                if channels != 1 {
                    return Err(Error::UnsupportedFormat(format!("{channels} channels")));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedFormat(format!("{bits} bits per sample")));
                }
                if rate == 0 {
                    return Err(Error::MalformedHeader("zero sample rate".into()));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                data = Some(&bytes[body..end]);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    let rate = sample_rate.ok_or_else(|| Error::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedHeader("no data chunk".into()))?;
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    if samples.is_empty() {
        return Err(Error::MalformedHeader("empty data chunk".into()));
    }
    TimeSignal::new(samples, rate as f64)
}

/// Encodes samples as a canonical 44-byte-header mono 16-bit PCM WAV.
/// Values are clamped to the representable range.
pub fn encode_wav_pcm16_mono(samples: &[f64], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
