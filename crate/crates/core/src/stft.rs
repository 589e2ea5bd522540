//! Differentiable STFT in `theta`, in two frame-grid flavours.
//!
//! * Fixed size: frame starts `b_i = b_0 + i * hop` do not depend on `theta`,
//!   only the taper does.
//! * Fixed overlap: the nominal frame origin is `c_i = i * alpha * theta`. The
//!   frame is read from `b_i = floor(c_i)`, the taper is shifted right by
//!   `frac(c_i)` and bin `f` is rotated by `exp(-2j pi b_i f / N)`. Jumps of
//!   `b_i` are then exactly compensated, so each entry is continuous and
//!   differentiable in `theta`.
//!
//! For both, `dS/dtheta` is itself an STFT whose taper is the derivative of the
//! taper, so the gradient path reuses the FFT.

use std::f64::consts::PI;

use crate::dsp::{Complex, ComplexMatrix, Fft};
use crate::error::{Error, Result};
use crate::signals::TimeSignal;
use crate::window::{frame_window, FrameWindow, WindowParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridKind {
    FixedSize { hop: usize },
    FixedOverlap { alpha: f64 },
}

/// Frame start positions for one transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    kind: GridKind,
    starts: Vec<i64>,
    positions: Vec<f64>,
    valid: usize,
}

impl FrameGrid {
    /// `frames` frames starting at `b0` and spaced by `hop`.
    pub fn fixed_size(b0: usize, hop: usize, frames: usize) -> Result<Self> {
        if hop == 0 {
            return Err(Error::InvalidGrid("hop must be positive".into()));
        }
        if frames == 0 {
            return Err(Error::InvalidGrid("no frames".into()));
        }
        let starts: Vec<i64> = (0..frames).map(|i| (b0 + i * hop) as i64).collect();
        let positions = starts.iter().map(|&b| b as f64).collect();
        Ok(Self {
            kind: GridKind::FixedSize { hop },
            starts,
            positions,
            valid: frames,
        })
    }

    /// Fixed-size grid from `b_0 = 0` with every frame inside the signal:
    /// `floor((len - N) / hop) + 1` frames, or a single zero-padded frame when
    /// the signal is shorter than `N`.
    pub fn fixed_size_covering(signal_len: usize, support_n: usize, hop: usize) -> Result<Self> {
        if hop == 0 {
            return Err(Error::InvalidGrid("hop must be positive".into()));
        }
        let frames = if signal_len <= support_n {
            1
        } else {
            (signal_len - support_n) / hop + 1
        };
        Self::fixed_size(0, hop, frames)
    }

    /// Fixed-overlap grid at `params.theta()`.
    ///
    /// The row count is the largest number of frames that cover at least one
    /// signal sample anywhere in `[theta_min, theta_max]`, so the output shape
    /// does not change while `theta` is optimized. Frames past the signal are
    /// left as zero rows; [`FrameGrid::valid_frames`] counts the live ones.
    pub fn fixed_overlap(alpha: f64, params: &WindowParams, signal_len: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if signal_len == 0 {
            return Err(Error::InvalidGrid("empty signal".into()));
        }
        let n = params.support_n();
        let rows = overlap_frame_count(alpha, params.theta_min(), n, signal_len)
            .max(overlap_frame_count(alpha, params.theta_max(), n, signal_len))
            .max(1);
        let theta = params.theta();
        let positions: Vec<f64> = (0..rows).map(|i| i as f64 * alpha * theta).collect();
        let starts = positions.iter().map(|c| c.floor() as i64).collect();
        let valid = overlap_frame_count(alpha, theta, n, signal_len).min(rows);
        Ok(Self {
            kind: GridKind::FixedOverlap { alpha },
            starts,
            positions,
            valid,
        })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Total number of rows in the output.
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn starts(&self) -> &[i64] {
        &self.starts
    }

    /// Leading rows whose window touches the signal.
    pub fn valid_frames(&self) -> usize {
        self.valid
    }

    /// Exact (possibly fractional) frame origin `b_i + shift_i`.
    pub fn position(&self, i: usize) -> f64 {
        self.positions[i]
    }

    /// Taper shift `frac(c_i)`; always 0 for fixed-size grids.
    pub fn shift(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::FixedSize { .. } => 0.0,
            GridKind::FixedOverlap { .. } => self.positions[i] - self.starts[i] as f64,
        }
    }

    /// Derivative of the frame origin with respect to `theta` (`i * alpha`
    /// for fixed overlap, almost everywhere).
    pub fn position_dtheta(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::FixedSize { .. } => 0.0,
            GridKind::FixedOverlap { alpha } => i as f64 * alpha,
        }
    }
}

/// Frames `i >= 0` whose taper support starts before the last sample:
/// `i * alpha * theta + (N - 1 - theta) / 2 < len - 1`.
fn overlap_frame_count(alpha: f64, theta: f64, support_n: usize, signal_len: usize) -> usize {
    let room = (signal_len as f64 - 1.0) - (support_n as f64 - 1.0 - theta) / 2.0;
    if room <= 0.0 {
        0
    } else {
        (room / (alpha * theta)).ceil() as usize
    }
}

/// Transform result plus the grid and parameters it was computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct StftOutput {
    pub matrix: ComplexMatrix,
    pub grid: FrameGrid,
    pub params: WindowParams,
    /// Rows at or beyond this index are exactly zero.
    pub valid_frames: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Taper {
    Value,
    Dtheta,
}

fn transform(signal: &TimeSignal, grid: &FrameGrid, params: &WindowParams, taper: Taper) -> Result<ComplexMatrix> {
    let n = params.support_n();
    let fft = Fft::new(n)?;
    let mut out = ComplexMatrix::zeros(grid.len(), n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let fixed: Option<FrameWindow> = match grid.kind() {
        GridKind::FixedSize { .. } => Some(frame_window(params, 0.0)?),
        GridKind::FixedOverlap { .. } => None,
    };
    let mut coeffs = vec![0.0; n];
    for i in 0..grid.valid_frames() {
        let owned;
        let win = match &fixed {
            Some(w) => w,
            None => {
                owned = frame_window(params, grid.shift(i))?;
                &owned
            }
        };
        match taper {
            Taper::Value => coeffs.copy_from_slice(&win.values),
            Taper::Dtheta => {
                // d/dtheta of h(k - frac(c_i) + offset): frac(c_i) moves at rate i*alpha
                let rate = grid.position_dtheta(i);
                for (c, (dt, dx)) in coeffs.iter_mut().zip(win.dtheta.iter().zip(&win.dx)) {
                    *c = dt - rate * dx;
                }
            }
        }
        let b = grid.starts()[i];
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(coeffs[k] * signal.sample(b + k as i64), 0.0);
        }
        fft.process(&mut buf);
        if let GridKind::FixedOverlap { .. } = grid.kind() {
            apply_phase(&mut buf, b);
        }
        out.row_mut(i).copy_from_slice(&buf);
    }
    Ok(out)
}

/// Multiplies bin `f` by `exp(-2j pi b f / N)`.
fn apply_phase(buf: &mut [Complex], b: i64) {
    let n = buf.len() as i64;
    let b = b.rem_euclid(n);
    if b == 0 {
        return;
    }
    for (f, z) in buf.iter_mut().enumerate() {
        let m = (b * f as i64) % n;
        *z *= Complex::from_polar(1.0, -2.0 * PI * m as f64 / n as f64);
    }
}

fn require_fixed_size(grid: &FrameGrid) -> Result<()> {
    match grid.kind() {
        GridKind::FixedSize { .. } => Ok(()),
        GridKind::FixedOverlap { .. } => Err(Error::InvalidGrid("fixed-size transform needs a fixed-size grid".into())),
    }
}

pub fn stft_fixed_size_forward(signal: &TimeSignal, grid: &FrameGrid, params: &WindowParams) -> Result<StftOutput> {
    require_fixed_size(grid)?;
    let matrix = transform(signal, grid, params, Taper::Value)?;
    Ok(StftOutput {
        matrix,
        grid: grid.clone(),
        params: *params,
        valid_frames: grid.valid_frames(),
    })
}

/// `dS/dtheta` for the fixed-size transform.
pub fn stft_fixed_size_grad_theta(signal: &TimeSignal, grid: &FrameGrid, params: &WindowParams) -> Result<ComplexMatrix> {
    require_fixed_size(grid)?;
    transform(signal, grid, params, Taper::Dtheta)
}

pub fn stft_fixed_overlap_forward(signal: &TimeSignal, alpha: f64, params: &WindowParams) -> Result<StftOutput> {
    let grid = FrameGrid::fixed_overlap(alpha, params, signal.len())?;
    let matrix = transform(signal, &grid, params, Taper::Value)?;
    let valid_frames = grid.valid_frames();
    Ok(StftOutput {
        matrix,
        grid,
        params: *params,
        valid_frames,
    })
}

/// `dS/dtheta` for the fixed-overlap transform.
///
/// The taper is `h_theta - i*alpha*h_x` at `k - frac(i alpha theta)`; `b_i` is
/// piecewise constant so the phase factor contributes nothing. At breakpoints
/// the same formula is the common value of the left and right derivatives.
pub fn stft_fixed_overlap_grad_theta(signal: &TimeSignal, alpha: f64, params: &WindowParams) -> Result<ComplexMatrix> {
    let grid = FrameGrid::fixed_overlap(alpha, params, signal.len())?;
    transform(signal, &grid, params, Taper::Dtheta)
}

/// `dL/dtheta` from the loss cotangent and `dS/dtheta`.
///
/// The cotangent stores `dL/dRe S` in the real part and `dL/dIm S` in the
/// imaginary part; the result is `sum Re(c) Re(g) + Im(c) Im(g)`.
pub fn backprop_theta(cotangent: &ComplexMatrix, grad: &ComplexMatrix) -> Result<f64> {
    cotangent.check_shape(grad)?;
    Ok(cotangent
        .data()
        .iter()
        .zip(grad.data())
        .map(|(c, g)| c.re * g.re + c.im * g.im)
        .sum())
}

/// Frame-grid policy, resolved against a signal and `theta` on each call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    FixedSize { hop: usize },
    FixedOverlap { alpha: f64 },
}

impl Variant {
    pub fn grid(&self, signal_len: usize, params: &WindowParams) -> Result<FrameGrid> {
        match *self {
            Variant::FixedSize { hop } => FrameGrid::fixed_size_covering(signal_len, params.support_n(), hop),
            Variant::FixedOverlap { alpha } => FrameGrid::fixed_overlap(alpha, params, signal_len),
        }
    }

    pub fn forward(&self, signal: &TimeSignal, params: &WindowParams) -> Result<StftOutput> {
        match *self {
            Variant::FixedSize { .. } => {
                let grid = self.grid(signal.len(), params)?;
                stft_fixed_size_forward(signal, &grid, params)
            }
            Variant::FixedOverlap { alpha } => stft_fixed_overlap_forward(signal, alpha, params),
        }
    }

    /// Forward output and `dS/dtheta` on a shared grid.
    pub fn forward_with_grad(&self, signal: &TimeSignal, params: &WindowParams) -> Result<(StftOutput, ComplexMatrix)> {
        let grid = self.grid(signal.len(), params)?;
        let matrix = transform(signal, &grid, params, Taper::Value)?;
        let grad = transform(signal, &grid, params, Taper::Dtheta)?;
        let valid_frames = grid.valid_frames();
        Ok((
            StftOutput {
                matrix,
                grid,
                params: *params,
                valid_frames,
            },
            grad,
        ))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::FixedSize { .. } => "fixed-size",
            Variant::FixedOverlap { .. } => "fixed-overlap",
        }
    }
}
