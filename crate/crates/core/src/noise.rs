//! Seeded Gaussian measurement noise. Each call builds its own generator from
//! the seed, so there is no shared generator state between sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    None,
    /// Additive noise with a fixed standard deviation.
    Absolute(f64),
    /// Multiplicative noise: standard deviation proportional to the local value.
    Relative(f64),
}

impl Noise {
    pub fn check(self) -> Result<()> {
        match self {
            Noise::Absolute(s) | Noise::Relative(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(Error::invalid("noise_sigma", "must be >= 0"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Noise::None => true,
            Noise::Absolute(s) | Noise::Relative(s) => s == 0.0,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Returns `clean` with noise drawn in index order from a generator seeded with `seed`.
pub fn add_noise(clean: &[f64], noise: Noise, seed: u64) -> Vec<f64> {
    if noise.is_zero() {
        return clean.to_vec();
    }
    let mut rng = rng(seed);
    clean
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            match noise {
                Noise::None => v,
                Noise::Absolute(s) => v + s * z,
                Noise::Relative(s) => v * (1.0 + s * z),
            }
        })
        .collect()
}
