//! In-place transforms with the conventions used throughout the AFC engine:
//! forward uses e^{-2πikn/N} unscaled, inverse uses e^{+2πikn/N} and divides by N.

use num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn forward(data: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(data.len()).process(data);
}

pub(crate) fn inverse(data: &mut [Complex64]) {
    FftPlanner::new().plan_fft_inverse(data.len()).process(data);
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
}

/// Frequency of DFT bin `k` for an `n`-point transform with sample step `dt`.
pub(crate) fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x: Vec<Complex64> = (0..12).map(|i| Complex64::new(i as f64, -(i as f64).sqrt())).collect();
        let mut y = x.clone();
        forward(&mut y);
        inverse(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn tone_lands_in_its_bin() {
        let n = 64;
        let dt = 1e-6;
        let f = bin_frequency(5, n, dt);
        let mut x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * i as f64 * dt))
            .collect();
        forward(&mut x);
        assert!((x[5].norm() - n as f64).abs() < 1e-9);
        assert!(bin_frequency(n - 1, n, dt) < 0.0);
    }
}
