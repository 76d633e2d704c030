//! Causal linear response of an absorbing medium.
//!
//! The field transmission has modulus e^{-d/2}. Its phase is fixed by
//! requiring the impulse response to vanish for t < 0: the log-modulus is
//! folded onto positive "quefrency" through its real cepstrum, which is the
//! discrete Hilbert transform of −d/2.

use num_complex::Complex64;

use super::comb::CombProfile;
use super::fft;
use crate::error::{Error, Result};

/// exp of the analytic signal whose real part is `log_modulus`, indexed like a
/// DFT spectrum (bin k ↔ kernel e^{-2πikn/N}).
pub(crate) fn minimum_phase(log_modulus: &[f64]) -> Vec<Complex64> {
    let n = log_modulus.len();
    let mut cep: Vec<Complex64> = log_modulus.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    fft::inverse(&mut cep);
    let half = n / 2;
    for (i, c) in cep.iter_mut().enumerate() {
        if i == 0 || (n.is_multiple_of(2) && i == half) {
            continue;
        }
        if i < n.div_ceil(2) {
            *c *= 2.0;
        } else {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    fft::forward(&mut cep);
    cep.iter_mut().for_each(|c| *c = c.exp());
    cep
}

/// H(f) sampled on the profile's own grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub f_start: f64,
    pub df: f64,
    pub response: Vec<Complex64>,
}

/// Impulse response on t_n = n·dt, n = 0..N. The upper half of the array
/// holds the wrapped negative times.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub dt: f64,
    pub values: Vec<Complex64>,
}

impl ImpulseResponse {
    /// Fraction of total energy sitting at negative times.
    pub fn acausal_fraction(&self) -> f64 {
        let n = self.values.len();
        let total: f64 = self.values.iter().map(|c| c.norm_sqr()).sum();
        let negative: f64 = self.values[n.div_ceil(2)..].iter().map(|c| c.norm_sqr()).sum();
        negative / total
    }
}

pub fn transfer_function(profile: &CombProfile) -> Result<TransferFunction> {
    if profile.len() < 2 {
        return Err(Error::invalid("profile", "need at least two samples"));
    }
    let log_modulus: Vec<f64> = profile.depth().iter().map(|d| -0.5 * d).collect();
    Ok(TransferFunction {
        f_start: profile.f_start(),
        df: profile.df(),
        response: minimum_phase(&log_modulus),
    })
}

impl TransferFunction {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.response.len())
            .map(|i| self.f_start + i as f64 * self.df)
            .collect()
    }

    /// h(t_n) = Σ_k H_k e^{2πi f_k t_n} df, with t_n = n / (N df).
    pub fn impulse_response(&self) -> ImpulseResponse {
        let n = self.response.len();
        let mut h = self.response.clone();
        fft::inverse(&mut h);
        let dt = 1.0 / (n as f64 * self.df);
        let scale = n as f64 * self.df;
        for (i, v) in h.iter_mut().enumerate() {
            let t = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 } * dt;
            *v *= Complex64::from_polar(scale, 2.0 * std::f64::consts::PI * self.f_start * t);
        }
        ImpulseResponse { dt, values: h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afc::comb::{build_comb, CombSpec, ToothShape};

    fn flat(depth: f64, n: usize) -> CombProfile {
        let freqs: Vec<f64> = (0..n).map(|i| i as f64 * 1e3).collect();
        CombProfile::from_samples(&freqs, vec![depth; n], depth).unwrap()
    }

    #[test]
    fn transparent_medium_is_identity() {
        let tf = transfer_function(&flat(0.0, 256)).unwrap();
        for h in &tf.response {
            assert!((h - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn flat_absorber_has_flat_response() {
        let tf = transfer_function(&flat(0.8, 256)).unwrap();
        let phase0 = tf.response[0].arg();
        for h in &tf.response {
            assert!((h.norm() - (-0.4f64).exp()).abs() < 1e-14);
            assert!((h.arg() - phase0).abs() < 1e-12);
        }
    }

    #[test]
    fn modulus_follows_depth() {
        let spec = CombSpec::new(200e3, 2.0, 1.5, 0.1, 2e6, 0.0, ToothShape::Gaussian).unwrap();
        let profile = build_comb(&spec, 5e3).unwrap();
        let tf = transfer_function(&profile).unwrap();
        for (h, d) in tf.response.iter().zip(profile.depth()) {
            assert!((h.norm() - (-0.5 * d).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn comb_impulse_response_is_causal_with_echoes() {
        let spec = CombSpec::new(200e3, 4.0, 1.0, 0.05, 4e6, 0.0, ToothShape::Gaussian).unwrap();
        // pad the grid so the response has room to decay
        let mut profile = build_comb(&spec, 1e3).unwrap();
        let freqs: Vec<f64> = (0..16384).map(|i| -8.192e6 + i as f64 * 1e3).collect();
        let depth = freqs.iter().map(|&f| profile.eval(f)).collect();
        profile = CombProfile::from_samples(&freqs, depth, spec.d0).unwrap();
        let ir = transfer_function(&profile).unwrap().impulse_response();
        assert!(ir.acausal_fraction() < 1e-6, "{}", ir.acausal_fraction());

        // strongest local maxima after the prompt response sit at n/Δ
        let mag: Vec<f64> = ir.values.iter().map(|c| c.norm()).collect();
        for echo in 1..=3 {
            let target = echo as f64 / spec.delta;
            let centre = (target / ir.dt).round() as usize;
            let half = (0.4 / spec.delta / ir.dt) as usize;
            let (peak, _) = mag[centre - half..centre + half]
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
            let t = (centre - half + peak) as f64 * ir.dt;
            assert!((t - target).abs() <= ir.dt, "echo {echo} at {t}");
        }
    }
}
