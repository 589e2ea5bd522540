//! Short-time Fourier transform whose window length is a continuous parameter.
//!
//! The frame length `N` (the DFT size) is split from the time resolution
//! `theta`, the support of a continuous Hann taper centered in the frame. The
//! transform is then differentiable in `theta`, and `dL/dtheta` for any loss
//! of the spectrogram is an inner product between the loss cotangent and an
//! STFT computed with the derivative taper.
//!
//! Modules, bottom up: [`dsp`] (FFT), [`window`], [`stft`], [`spectro`]
//! (power, centroid, tracking loss), [`signals`], [`optim`] and
//! [`experiments`].

pub mod dsp;
pub mod error;
pub mod experiments;
pub mod optim;
pub mod signals;
pub mod spectro;
pub mod stft;
pub mod window;

pub use dsp::{Complex, ComplexMatrix};
pub use error::{Error, Result};
pub use signals::TimeSignal;
pub use stft::{FrameGrid, StftOutput, Variant};
pub use window::WindowParams;
