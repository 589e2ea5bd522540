//! Complex arithmetic, the literal DFT and an iterative radix-2 FFT.
//!
//! Both transforms use the unnormalized forward convention
//! `X[f] = sum_k x[k] exp(-2j*pi*k*f/N)`. The direct DFT is kept as the
//! reference the FFT is tested against.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Complex = num_complex::Complex64;

/// Row-major `rows x cols` matrix of complex values. For STFT outputs rows are
/// frames and columns are frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
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

    pub fn data(&self) -> &[Complex] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[Complex] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [Complex] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Largest modulus over all entries.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn check_shape(&self, other: &ComplexMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other.shape(),
            });
        }
        Ok(())
    }
}

fn check_finite(x: &[Complex], what: &'static str) -> Result<()> {
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Literal double-loop DFT. O(N^2); used as the reference implementation.
pub fn dft_direct(x: &[Complex]) -> Result<Vec<Complex>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidSignal("empty DFT input".into()));
    }
    check_finite(x, "DFT input")?;
    let out = (0..n)
        .map(|f| {
            x.iter()
                .enumerate()
                .map(|(k, &v)| {
                    // reduce k*f mod n first so the angle stays small
                    let angle = -2.0 * PI * ((k * f) % n) as f64 / n as f64;
                    v * Complex::from_polar(1.0, angle)
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Precomputed twiddles and bit-reversal table for one power-of-two size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let twiddles = (0..n / 2)
            .map(|k| Complex::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Ok(Self {
            n,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform. `buf.len()` must equal the plan size.
    pub fn process(&self, buf: &mut [Complex]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match FFT plan");
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

/// Radix-2 FFT with the same contract as [`dft_direct`].
pub fn fft_radix2(x: &[Complex]) -> Result<Vec<Complex>> {
    let plan = Fft::new(x.len())?;
    check_finite(x, "FFT input")?;
    let mut buf = x.to_vec();
    plan.process(&mut buf);
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex {
        Complex::new(re, 0.0)
    }

    fn assert_close(a: &[Complex], b: &[Complex], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn zeros_map_to_zeros() {
        let x = vec![c(0.0); 8];
        assert_close(&dft_direct(&x).unwrap(), &x, 0.0);
        assert_close(&fft_radix2(&x).unwrap(), &x, 0.0);
    }

    #[test]
    fn delta_gives_flat_spectrum() {
        let x = vec![c(1.0), c(0.0), c(0.0), c(0.0)];
        let want = vec![c(1.0); 4];
        assert_close(&dft_direct(&x).unwrap(), &want, 1e-15);
        assert_close(&fft_radix2(&x).unwrap(), &want, 1e-15);
    }

    #[test]
    fn constant_gives_dc_spike() {
        let x = vec![c(1.0); 4];
        let want = vec![c(4.0), c(0.0), c(0.0), c(0.0)];
        assert_close(&dft_direct(&x).unwrap(), &want, 1e-14);
        assert_close(&fft_radix2(&x).unwrap(), &want, 1e-14);
    }

    #[test]
    fn size_one_is_identity() {
        let x = vec![Complex::new(2.5, -1.0)];
        assert_close(&fft_radix2(&x).unwrap(), &x, 0.0);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = vec![c(1.0); 6];
        assert!(matches!(fft_radix2(&x), Err(Error::NotPowerOfTwo(6))));
        assert!(matches!(Fft::new(0), Err(Error::NotPowerOfTwo(0))));
        // the direct DFT accepts any length
        assert_eq!(dft_direct(&x).unwrap().len(), 6);
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = vec![c(1.0), c(f64::NAN), c(0.0), c(0.0)];
        assert!(matches!(fft_radix2(&x), Err(Error::NonFinite(_))));
        assert!(matches!(dft_direct(&x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(ComplexMatrix::from_vec(2, 3, vec![c(0.0); 5]).is_err());
        let a = ComplexMatrix::zeros(2, 4);
        let b = ComplexMatrix::zeros(4, 2);
        assert!(matches!(
            a.max_abs_diff(&b),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
