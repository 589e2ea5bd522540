use std::f64::consts::PI;

use dstft::dsp::{dft_direct, fft_radix2, Complex, ComplexMatrix};
use dstft::optim::{breakpoints, clean_overlap_theta, random_signal};
use dstft::stft::{
    backprop_theta, stft_fixed_overlap_forward, stft_fixed_overlap_grad_theta, stft_fixed_size_forward,
    stft_fixed_size_grad_theta, FrameGrid,
};
use dstft::window::{frame_window, hann_continuous, WindowParams};
use dstft::TimeSignal;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_complex(n: usize, seed: u64) -> Vec<Complex> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn max_diff(a: &[Complex], b: &[Complex]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Literal STFT with a length-N discrete Hann (denominator N - 1).
fn classical_stft(signal: &[f64], starts: &[usize], n: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(starts.len(), n);
    for (i, &b) in starts.iter().enumerate() {
        for f in 0..n {
            let mut acc = Complex::new(0.0, 0.0);
            for k in 0..n {
                let h = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n as f64 - 1.0)).cos();
                let s = signal.get(b + k).copied().unwrap_or(0.0);
                let angle = -2.0 * PI * ((k * f) % n) as f64 / n as f64;
                acc += h * s * Complex::from_polar(1.0, angle);
            }
            out.set(i, f, acc);
        }
    }
    out
}

/// Literal double loop over the fixed-overlap definition.
fn overlap_oracle(signal: &TimeSignal, alpha: f64, params: &WindowParams, rows: usize) -> ComplexMatrix {
    let n = params.support_n();
    let theta = params.theta();
    let offset = (theta - n as f64 + 1.0) / 2.0;
    let mut out = ComplexMatrix::zeros(rows, n);
    for i in 0..rows {
        let c = i as f64 * alpha * theta;
        let b = c.floor();
        let shift = c - b;
        for f in 0..n {
            let mut acc = Complex::new(0.0, 0.0);
            for k in 0..n {
                let h = hann_continuous(k as f64 - shift + offset, theta).unwrap();
                let s = signal.sample(b as i64 + k as i64);
                let angle = -2.0 * PI * (k as f64 + b) * f as f64 / n as f64;
                acc += h * s * Complex::from_polar(1.0, angle);
            }
            out.set(i, f, acc);
        }
    }
    out
}

#[test]
fn fft_matches_direct_dft_all_sizes() {
    for bits in 0..=10 {
        let n = 1usize << bits;
        let x = random_complex(n, 1000 + bits);
        let fast = fft_radix2(&x).unwrap();
        let slow = dft_direct(&x).unwrap();
        let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
        assert!(max_diff(&fast, &slow) <= 1e-9 * scale, "N = {n}");
    }
}

#[test]
fn fft_256_matches_direct() {
    let x = random_complex(256, 7);
    assert!(max_diff(&fft_radix2(&x).unwrap(), &dft_direct(&x).unwrap()) <= 1e-9);
}

proptest! {
    #[test]
    fn parseval(bits in 1u32..=10, seed in any::<u64>()) {
        let n = 1usize << bits;
        let x = random_complex(n, seed);
        let spec = fft_radix2(&x).unwrap();
        let time: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        let freq: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((freq - n as f64 * time).abs() <= 1e-10 * freq.abs().max(1.0));
    }

    #[test]
    fn linearity(bits in 1u32..=9, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let n = 1usize << bits;
        let x = random_complex(n, seed);
        let y = random_complex(n, seed.wrapping_add(1));
        let mix: Vec<Complex> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
        let lhs = fft_radix2(&mix).unwrap();
        let fx = fft_radix2(&x).unwrap();
        let fy = fft_radix2(&y).unwrap();
        let rhs: Vec<Complex> = fx.iter().zip(&fy).map(|(p, q)| p * a + q * b).collect();
        prop_assert!(max_diff(&lhs, &rhs) <= 1e-10 * (n as f64));
    }

    #[test]
    fn window_support_and_symmetry(exp in 3u32..=8, frac in 0.0f64..1.0, shift in 0.0f64..0.999) {
        let n = 1usize << exp;
        let theta = 2.0 + frac * (n as f64 - 2.0);
        let p = WindowParams::new(n, theta).unwrap();
        let w = frame_window(&p, shift).unwrap();
        let lo = (n as f64 - 1.0 - theta) / 2.0 + shift;
        let hi = (n as f64 - 1.0 + theta) / 2.0 + shift;
        for (k, v) in w.values.iter().enumerate() {
            let pos = k as f64;
            if pos < lo || pos > hi {
                prop_assert_eq!(*v, 0.0);
            }
            prop_assert!((0.0..=1.0).contains(v));
        }
        let centered = frame_window(&p, 0.0).unwrap();
        for k in 0..n {
            prop_assert!((centered.values[k] - centered.values[n - 1 - k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn window_dtheta_matches_finite_difference(exp in 3u32..=7, frac in 0.05f64..0.95, shift in 0.0f64..0.99) {
        let n = 1usize << exp;
        let theta = 2.5 + frac * (n as f64 - 3.0);
        let eps = 1e-6;
        let p = WindowParams::new(n, theta).unwrap();
        let w = frame_window(&p, shift).unwrap();
        let up = frame_window(&p.with_theta(theta + eps).unwrap(), shift).unwrap();
        let down = frame_window(&p.with_theta(theta - eps).unwrap(), shift).unwrap();
        for k in 0..n {
            let numeric = (up.values[k] - down.values[k]) / (2.0 * eps);
            prop_assert!((w.dtheta[k] - numeric).abs() <= 1e-7, "k={} {} vs {}", k, w.dtheta[k], numeric);
        }
    }
}

#[test]
fn window_dx_matches_finite_difference_in_position() {
    let theta: f64 = 8.0;
    let x = theta / 4.0;
    let eps = 1e-6;
    let numeric = (hann_continuous(x + eps, theta).unwrap() - hann_continuous(x - eps, theta).unwrap()) / (2.0 * eps);
    let analytic = dstft::window::hann_dx(x, theta).unwrap();
    assert!((analytic - numeric).abs() < 1e-9);
    assert!((analytic - std::f64::consts::FRAC_PI_8).abs() < 1e-9);
}

#[test]
fn classical_stft_reduction() {
    for n in [16usize, 64, 256] {
        let len = 4 * n;
        let signal = random_signal(len, n as u64);
        let hop = n / 4;
        let grid = FrameGrid::fixed_size_covering(len, n, hop).unwrap();
        let params = WindowParams::new(n, n as f64 - 1.0).unwrap();
        let ours = stft_fixed_size_forward(&signal, &grid, &params).unwrap();
        let starts: Vec<usize> = grid.starts().iter().map(|&b| b as usize).collect();
        let oracle = classical_stft(signal.samples(), &starts, n);
        assert!(ours.matrix.max_abs_diff(&oracle).unwrap() <= 1e-10, "N = {n}");
    }
}

fn fd_matrix(f: impl Fn(f64) -> ComplexMatrix, theta: f64, eps: f64) -> ComplexMatrix {
    let up = f(theta + eps);
    let down = f(theta - eps);
    let data = up.data().iter().zip(down.data()).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    ComplexMatrix::from_vec(up.rows(), up.cols(), data).unwrap()
}

#[test]
fn fixed_size_gradient_entrywise() {
    let n = 64;
    // 33.0 is the midpoint of [2, 64]; the last case is a pure tone
    for (seed, theta) in [(1u64, 9.7), (2, 21.3), (3, 33.0), (4, 50.2), (5, 63.0)] {
        let signal = if seed == 3 {
            TimeSignal::new((0..400).map(|t| (2.0 * PI * 5.0 * t as f64 / 64.0).sin()).collect(), 1.0).unwrap()
        } else {
            random_signal(400, seed)
        };
        let grid = FrameGrid::fixed_size_covering(400, n, 32).unwrap();
        let p = WindowParams::new(n, theta).unwrap();
        let analytic = stft_fixed_size_grad_theta(&signal, &grid, &p).unwrap();
        let numeric = fd_matrix(
            |t| stft_fixed_size_forward(&signal, &grid, &p.with_theta(t).unwrap()).unwrap().matrix,
            theta,
            1e-4,
        );
        let err = analytic.max_abs_diff(&numeric).unwrap();
        assert!(err <= 1e-6, "theta {theta}: {err}");
    }
}

#[test]
fn fixed_overlap_forward_matches_literal_definition() {
    let signal = random_signal(300, 9);
    // 0.5 * 13.37 * i is never an integer for the rows used here
    let p = WindowParams::new(32, 13.37).unwrap();
    let out = stft_fixed_overlap_forward(&signal, 0.5, &p).unwrap();
    let oracle = overlap_oracle(&signal, 0.5, &p, out.valid_frames);
    for i in 0..out.valid_frames {
        for f in 0..32 {
            assert!((out.matrix.get(i, f) - oracle.get(i, f)).norm() <= 1e-10);
        }
    }
}

#[test]
fn fixed_overlap_reduces_to_fixed_size_on_integer_hops() {
    // alpha * theta = 8 exactly: no fractional shift anywhere
    let signal = random_signal(256, 4);
    let p = WindowParams::new(32, 16.0).unwrap();
    let fo = stft_fixed_overlap_forward(&signal, 0.5, &p).unwrap();
    let grid = FrameGrid::fixed_size(0, 8, fo.valid_frames).unwrap();
    let fs = stft_fixed_size_forward(&signal, &grid, &p).unwrap();
    for i in 0..fo.valid_frames {
        let b = 8 * i;
        for f in 0..32 {
            let phase = Complex::from_polar(1.0, -2.0 * PI * ((b * f) % 32) as f64 / 32.0);
            assert!((fo.matrix.get(i, f) - fs.matrix.get(i, f) * phase).norm() <= 1e-10);
        }
    }
}

#[test]
fn fixed_overlap_gradient_away_from_breakpoints() {
    let alpha = 0.5;
    for (seed, start) in [(11u64, 7.3), (12, 18.9), (13, 29.45), (14, 44.1)] {
        let theta = clean_overlap_theta(alpha, start, 64, 512, 1e-3, 1e-5).unwrap();
        let signal = random_signal(512, seed);
        let p = WindowParams::new(64, theta).unwrap();
        let analytic = stft_fixed_overlap_grad_theta(&signal, alpha, &p).unwrap();
        let numeric = fd_matrix(
            |t| stft_fixed_overlap_forward(&signal, alpha, &p.with_theta(t).unwrap()).unwrap().matrix,
            theta,
            1e-5,
        );
        let err = analytic.max_abs_diff(&numeric).unwrap();
        assert!(err <= 1e-5, "theta {theta}: {err}");
    }
}

#[test]
fn fixed_overlap_continuous_and_differentiable_at_breakpoints() {
    let alpha = 0.5;
    let n = 64;
    let signal = random_signal(512, 21);
    // theta* <= N - 3 keeps the shifted taper inside the frame on both sides
    let bps = breakpoints(alpha, 12, 8.0, n as f64 - 3.0, 400);
    let picked: Vec<_> = bps.iter().step_by(bps.len() / 12).take(12).collect();
    assert!(picked.len() >= 10);
    for &&(i, p, theta) in &picked {
        let params = WindowParams::new(n, theta).unwrap();
        let at = |t: f64| {
            stft_fixed_overlap_forward(&signal, alpha, &params.with_theta(t).unwrap())
                .unwrap()
                .matrix
        };
        let center = at(theta);
        let jump = at(theta + 1e-7).max_abs_diff(&at(theta - 1e-7)).unwrap();
        assert!(jump <= 1e-5 * (1.0 + center.max_abs()), "i={i} p={p}: jump {jump}");

        // second-order one-sided stencils: (-3 f(0) + 4 f(h) - f(2h)) / 2h
        let h = 1e-6;
        let up1 = at(theta + h);
        let up2 = at(theta + 2.0 * h);
        let down1 = at(theta - h);
        let down2 = at(theta - 2.0 * h);
        let analytic = stft_fixed_overlap_grad_theta(&signal, alpha, &params).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..center.data().len() {
            let c0 = center.data()[k];
            let above = (up1.data()[k] * 4.0 - c0 * 3.0 - up2.data()[k]) / (2.0 * h);
            let below = (c0 * 3.0 - down1.data()[k] * 4.0 + down2.data()[k]) / (2.0 * h);
            worst = worst
                .max((above - below).norm())
                .max((above - analytic.data()[k]).norm())
                .max((below - analytic.data()[k]).norm());
        }
        assert!(worst <= 1e-4, "i={i} p={p}: {worst}");
    }
}

#[test]
fn power_sum_gradient_fixed_size() {
    let n = 64;
    for seed in 0..5u64 {
        let signal = random_signal(512, 40 + seed);
        let grid = FrameGrid::fixed_size_covering(512, n, 16).unwrap();
        let theta = 10.0 + 9.7 * seed as f64;
        let p = WindowParams::new(n, theta).unwrap();
        let s = stft_fixed_size_forward(&signal, &grid, &p).unwrap().matrix;
        let g = stft_fixed_size_grad_theta(&signal, &grid, &p).unwrap();
        let cot = ComplexMatrix::from_vec(s.rows(), s.cols(), s.data().iter().map(|z| z * 2.0).collect()).unwrap();
        let analytic = backprop_theta(&cot, &g).unwrap();
        let loss = |t: f64| -> f64 {
            let m = stft_fixed_size_forward(&signal, &grid, &p.with_theta(t).unwrap()).unwrap().matrix;
            m.data().iter().map(|z| z.norm_sqr()).sum()
        };
        let numeric = (loss(theta + 1e-4) - loss(theta - 1e-4)) / 2e-4;
        assert!((analytic - numeric).abs() <= 1e-5 * analytic.abs(), "{analytic} vs {numeric}");
    }
}

#[test]
fn live_frame_count_non_increasing_in_theta() {
    let p = WindowParams::new(64, 2.0).unwrap();
    let mut last = usize::MAX;
    for step in 0..=62 {
        let theta = 2.0 + step as f64;
        let grid = FrameGrid::fixed_overlap(0.5, &p.with_theta(theta).unwrap(), 1000).unwrap();
        assert!(grid.valid_frames() <= last, "theta {theta}");
        last = grid.valid_frames();
    }
}
