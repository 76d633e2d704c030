//! Discrete collective-excitation oracle: a normalized superposition over N
//! ions whose forward emission amplitude is A(t) = Σ|C_j|² e^{−i2πδ_j t}.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::comb::{CombProfile, CombSpec, ToothShape};
use crate::error::{Error, Result};
use crate::noise::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DickeEnsemble {
    detunings: Vec<f64>,
    amplitudes: Vec<Complex64>,
    positions: Option<Vec<f64>>,
}

impl DickeEnsemble {
    pub fn new(
        detunings: Vec<f64>,
        amplitudes: Vec<Complex64>,
        positions: Option<Vec<f64>>,
    ) -> Result<Self> {
        if detunings.is_empty() {
            return Err(Error::invalid("detunings", "ensemble needs N >= 1"));
        }
        if amplitudes.len() != detunings.len() {
            return Err(Error::invalid("amplitudes", "length differs from detunings"));
        }
        if positions.as_ref().is_some_and(|z| z.len() != detunings.len()) {
            return Err(Error::invalid("positions", "length differs from detunings"));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("amplitudes", format!("sum |C_j|^2 = {norm}, expected 1")));
        }
        Ok(DickeEnsemble { detunings, amplitudes, positions })
    }

    /// Equal-weight ensemble over the given detunings.
    pub fn uniform(detunings: Vec<f64>) -> Result<Self> {
        let c = Complex64::new((1.0 / detunings.len().max(1) as f64).sqrt(), 0.0);
        let n = detunings.len();
        DickeEnsemble::new(detunings, vec![c; n], None)
    }

    /// Weights ∝ comb absorption above background, one ion per grid sample.
    pub fn from_profile(profile: &CombProfile) -> Result<Self> {
        let weights: Vec<f64> = profile
            .depth()
            .iter()
            .map(|d| (d - profile.background()).max(0.0))
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("profile", "no absorption above background"));
        }
        let amplitudes = weights
            .iter()
            .map(|w| Complex64::new((w / total).sqrt(), 0.0))
            .collect();
        DickeEnsemble::new(profile.frequencies(), amplitudes, None)
    }

    /// `n` ions drawn from the tooth distribution of `spec`: a tooth chosen
    /// uniformly, then an offset from the tooth shape.
    pub fn sample_comb(spec: &CombSpec, n: usize, seed: u64) -> Result<Self> {
        spec.check()?;
        if n == 0 {
            return Err(Error::invalid("n", "ensemble needs N >= 1"));
        }
        let centers = spec.tooth_centers();
        if centers.is_empty() {
            return Err(Error::invalid("spec", "comb has no teeth"));
        }
        let mut rng = rng(seed);
        let gamma = spec.tooth_fwhm();
        let normal = Normal::new(0.0, spec.tooth_sigma()).expect("sigma is positive");
        let detunings = (0..n)
            .map(|_| {
                let c = centers[rng.random_range(0..centers.len())];
                match spec.tooth_shape {
                    ToothShape::Gaussian => c + normal.sample(&mut rng),
                    ToothShape::Square => c + gamma * (rng.random::<f64>() - 0.5),
                }
            })
            .collect();
        DickeEnsemble::uniform(detunings)
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn positions(&self) -> Option<&[f64]> {
        self.positions.as_deref()
    }
}

pub fn dicke_echo_amplitude(ens: &DickeEnsemble, t: f64) -> Complex64 {
    ens.detunings
        .iter()
        .zip(&ens.amplitudes)
        .map(|(d, c)| Complex64::from_polar(c.norm_sqr(), -2.0 * PI * d * t))
        .sum()
}
