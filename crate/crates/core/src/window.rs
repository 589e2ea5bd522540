//! Continuous Hann family `h_theta` and the frame windows built from it.
//!
//! `h_theta(x) = 1/2 (1 - cos(2 pi x / theta))` on `[0, theta]` and zero
//! elsewhere. Restricted to integers with `theta = L - 1` it is the usual
//! length-`L` Hann window.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_THETA_MIN: f64 = 2.0;

/// Numerical window support `N` (the DFT size) and the continuous time
/// resolution `theta`, with the bounds `theta` is kept in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowParams {
    support_n: usize,
    theta: f64,
    theta_min: f64,
    theta_max: f64,
}

impl WindowParams {
    /// Bounds default to `[2, N]`.
    pub fn new(support_n: usize, theta: f64) -> Result<Self> {
        Self::with_bounds(support_n, theta, DEFAULT_THETA_MIN, support_n as f64)
    }

    pub fn with_bounds(support_n: usize, theta: f64, theta_min: f64, theta_max: f64) -> Result<Self> {
        if support_n < 2 || !support_n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(support_n));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidTheta(theta));
        }
        if !(DEFAULT_THETA_MIN <= theta_min && theta_min <= theta_max && theta_max <= support_n as f64) {
            return Err(Error::InvalidParams(format!(
                "need 2 <= theta_min ({theta_min}) <= theta_max ({theta_max}) <= N ({support_n})"
            )));
        }
        if !(theta_min <= theta && theta <= theta_max) {
            return Err(Error::InvalidTheta(theta));
        }
        Ok(Self {
            support_n,
            theta,
            theta_min,
            theta_max,
        })
    }

    pub fn support_n(&self) -> usize {
        self.support_n
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// Same support and bounds, new `theta`.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Self::with_bounds(self.support_n, theta, self.theta_min, self.theta_max)
    }

    /// Projects `theta` onto `[theta_min, theta_max]`.
    pub fn clamp_theta(&self, theta: f64) -> f64 {
        theta.clamp(self.theta_min, self.theta_max)
    }

    /// Offset added to the frame index so the window sits mid-frame.
    fn center_offset(&self) -> f64 {
        (self.theta - self.support_n as f64 + 1.0) / 2.0
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTheta(theta))
    }
}

pub fn hann_continuous(x: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(hann_value(x, theta))
}

/// Partial derivative of [`hann_continuous`] with respect to `theta`.
pub fn hann_dtheta(x: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(hann_value_dtheta(x, theta))
}

/// Partial derivative of [`hann_continuous`] with respect to the position.
pub fn hann_dx(x: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(hann_value_dx(x, theta))
}

#[inline]
fn hann_value(x: f64, theta: f64) -> f64 {
    if (0.0..=theta).contains(&x) {
        0.5 * (1.0 - (2.0 * PI * x / theta).cos())
    } else {
        0.0
    }
}

#[inline]
fn hann_value_dtheta(x: f64, theta: f64) -> f64 {
    if x > 0.0 && x < theta {
        -(PI * x / (theta * theta)) * (2.0 * PI * x / theta).sin()
    } else {
        0.0
    }
}

#[inline]
fn hann_value_dx(x: f64, theta: f64) -> f64 {
    if x > 0.0 && x < theta {
        (PI / theta) * (2.0 * PI * x / theta).sin()
    } else {
        0.0
    }
}

/// Window samples over one `N`-length frame together with their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameWindow {
    pub values: Vec<f64>,
    /// Total derivative in `theta` at fixed shift, including the centering term.
    pub dtheta: Vec<f64>,
    /// Derivative in the sample position.
    pub dx: Vec<f64>,
}

/// Samples `h_{N,theta}(k - shift)` for `k = 0..N`.
///
/// Element `k` evaluates the continuous Hann at `(k - shift) + (theta - N + 1) / 2`,
/// so at zero shift the nonzero part is centered on `(N - 1) / 2`.
pub fn frame_window(params: &WindowParams, shift: f64) -> Result<FrameWindow> {
    if !(0.0..1.0).contains(&shift) {
        return Err(Error::InvalidShift(shift));
    }
    let n = params.support_n;
    let theta = params.theta;
    let offset = params.center_offset();
    let mut values = Vec::with_capacity(n);
    let mut dtheta = Vec::with_capacity(n);
    let mut dx = Vec::with_capacity(n);
    for k in 0..n {
        let x = (k as f64 - shift) + offset;
        let hx = hann_value_dx(x, theta);
        values.push(hann_value(x, theta));
        // d(x)/d(theta) = 1/2 through the centering offset
        dtheta.push(hann_value_dtheta(x, theta) + 0.5 * hx);
        dx.push(hx);
    }
    Ok(FrameWindow { values, dtheta, dx })
}
