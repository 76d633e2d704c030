//! Population cascade excited → bottleneck → Zeeman → ground and the
//! spectral-hole-area decay it produces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MaterialModel;
use crate::noise::{add_noise, Noise};
use crate::trace::{TimeTrace, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeState {
    pub n_excited: f64,
    pub n_bottleneck: f64,
    pub n_zeeman_upper: f64,
    pub n_ground: f64,
}

impl CascadeState {
    pub fn new(n_excited: f64, n_bottleneck: f64, n_zeeman_upper: f64, n_ground: f64) -> Result<Self> {
        let s = CascadeState {
            n_excited,
            n_bottleneck,
            n_zeeman_upper,
            n_ground,
        };
        if s.as_array().iter().any(|n| !(0.0..=1.0).contains(n)) {
            return Err(Error::invalid("populations", "must lie in [0, 1]"));
        }
        if (s.total() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("populations", "must sum to 1"));
        }
        Ok(s)
    }

    pub fn all_excited() -> Self {
        CascadeState {
            n_excited: 1.0,
            n_bottleneck: 0.0,
            n_zeeman_upper: 0.0,
            n_ground: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.n_excited, self.n_bottleneck, self.n_zeeman_upper, self.n_ground]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Lifetimes and branching of the relaxation chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeRates {
    pub t1: f64,
    pub tb: f64,
    pub tz: f64,
    /// Fraction of excited-state decay that goes through the bottleneck.
    pub branching: f64,
}

impl CascadeRates {
    pub fn new(t1: f64, tb: f64, tz: f64, branching: f64) -> Result<Self> {
        if !(t1 > 0.0 && tb > 0.0 && tz > 0.0) {
            return Err(Error::invalid("lifetimes", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&branching) {
            return Err(Error::invalid("branching", "must lie in [0, 1]"));
        }
        Ok(CascadeRates { t1, tb, tz, branching })
    }
}

/// (1 - e^{-x}) / x, continuous at 0.
fn relax(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Derivative of [`relax`].
fn relax_prime(x: f64) -> f64 {
    if x.abs() < 0.05 {
        -0.5 + x / 3.0 - x * x / 8.0 + x.powi(3) / 30.0 - x.powi(4) / 144.0 + x.powi(5) / 840.0
            - x.powi(6) / 5760.0
    } else {
        ((-x).exp() * (1.0 + x) - 1.0) / (x * x)
    }
}

/// ∫₀ᵗ e^{-a s} e^{-b (t-s)} ds; equal rates give t·e^{-a t}.
pub(crate) fn conv2(a: f64, b: f64, t: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    (-lo * t).exp() * t * relax((hi - lo) * t)
}

/// Threefold convolution of decaying exponentials with rates a, b, c.
pub(crate) fn conv3(a: f64, b: f64, c: f64, t: f64) -> f64 {
    let mut r = [a, b, c];
    r.sort_by(|x, y| x.total_cmp(y));
    let u = (r[1] - r[0]) * t;
    let v = (r[2] - r[0]) * t;
    // second divided difference of e^{-x} at 0, u, v
    let gap = v - u;
    let dd = if gap > 1e-5 * u.max(1.0) {
        (relax(u) - relax(v)) / gap
    } else {
        -relax_prime(0.5 * (u + v))
    };
    (-r[0] * t).exp() * t * t * dd
}

/// Closed-form solution of the linear rate-equation chain at time `t`.
pub fn cascade_evolve(initial: &CascadeState, t: f64, rates: &CascadeRates) -> Result<CascadeState> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "must be >= 0"));
    }
    let (k1, kb, kz) = (1.0 / rates.t1, 1.0 / rates.tb, 1.0 / rates.tz);
    let beta = rates.branching;
    let [e0, b0, z0, g0] = initial.as_array();

    let n_e = e0 * (-k1 * t).exp();
    let n_b = b0 * (-kb * t).exp() + beta * e0 * k1 * conv2(k1, kb, t);
    let n_z = z0 * (-kz * t).exp()
        + b0 * kb * conv2(kb, kz, t)
        + beta * e0 * k1 * kb * conv3(k1, kb, kz, t)
        + (1.0 - beta) * e0 * k1 * conv2(k1, kz, t);
    let mut n_g = g0 + ((e0 - n_e) + (b0 - n_b) + (z0 - n_z));
    if n_g < 0.0 && n_g > -1e-12 {
        n_g = 0.0;
    }
    Ok(CascadeState {
        n_excited: n_e,
        n_bottleneck: n_b,
        n_zeeman_upper: n_z,
        n_ground: n_g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpComponent {
    pub amplitude: f64,
    pub lifetime: f64,
}

/// Σ aᵢ e^{-t/τᵢ} + offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialMixture {
    components: Vec<ExpComponent>,
    offset: f64,
}

impl ExponentialMixture {
    pub fn new(components: Vec<ExpComponent>, offset: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("components", "need at least one"));
        }
        for c in &components {
            if !(c.amplitude >= 0.0 && c.amplitude.is_finite()) {
                return Err(Error::invalid("amplitude", "must be >= 0"));
            }
            if !(c.lifetime > 0.0 && c.lifetime.is_finite()) {
                return Err(Error::invalid("lifetime", "must be > 0"));
            }
        }
        for (i, a) in components.iter().enumerate() {
            for b in &components[i + 1..] {
                if (a.lifetime - b.lifetime).abs() <= 1e-9 * a.lifetime.max(b.lifetime) {
                    return Err(Error::invalid("lifetime", "lifetimes must be distinct"));
                }
            }
        }
        if !offset.is_finite() {
            return Err(Error::invalid("offset", "must be finite"));
        }
        Ok(ExponentialMixture { components, offset })
    }

    pub fn from_pairs(pairs: &[(f64, f64)], offset: f64) -> Result<Self> {
        let components = pairs
            .iter()
            .map(|&(amplitude, lifetime)| ExpComponent { amplitude, lifetime })
            .collect();
        ExponentialMixture::new(components, offset)
    }

    /// Zero-field hole decay uses (T1, T_B); a field appends the Zeeman term.
    pub fn shb(model: &MaterialModel, amplitudes: &[f64], zeeman: Option<f64>) -> Result<Self> {
        let mut lifetimes = vec![model.t1_excited, model.t_bottleneck];
        lifetimes.extend(zeeman);
        if amplitudes.len() != lifetimes.len() {
            return Err(Error::invalid(
                "amplitudes",
                format!("expected {} amplitudes", lifetimes.len()),
            ));
        }
        let pairs: Vec<_> = amplitudes.iter().copied().zip(lifetimes).collect();
        ExponentialMixture::from_pairs(&pairs, 0.0)
    }

    pub fn components(&self) -> &[ExpComponent] {
        &self.components
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn total_amplitude(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude).sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude * (-t / c.lifetime).exp())
            .sum::<f64>()
            + self.offset
    }
}

pub fn hole_area(t: f64, mix: &ExponentialMixture) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "must be >= 0"));
    }
    Ok(mix.eval(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subgroup {
    Short,
    Long,
}

/// Piecewise-linear in field, flat outside the table.
pub fn zeeman_lifetime(b: f64, subgroup: Subgroup, model: &MaterialModel) -> Result<f64> {
    let table = &model.zeeman_table;
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if !b.is_finite() {
        return Err(Error::invalid("b", "must be finite"));
    }
    let value = |i: usize| match subgroup {
        Subgroup::Short => table[i].lifetime_short,
        Subgroup::Long => table[i].lifetime_long,
    };
    if b <= table[0].field {
        return Ok(value(0));
    }
    let last = table.len() - 1;
    if b >= table[last].field {
        return Ok(value(last));
    }
    let hi = table.partition_point(|e| e.field <= b);
    let lo = hi - 1;
    let frac = (b - table[lo].field) / (table[hi].field - table[lo].field);
    Ok(value(lo) + frac * (value(hi) - value(lo)))
}

/// Hole area on `t_grid` plus seeded noise.
pub fn synthesize_shb_decay(
    mix: &ExponentialMixture,
    t_grid: &[f64],
    noise: Noise,
    seed: u64,
) -> Result<TimeTrace> {
    noise.check()?;
    if let Some(i) = t_grid.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::UnsortedGrid { index: i + 1 });
    }
    let clean = t_grid
        .iter()
        .map(|&t| hole_area(t, mix))
        .collect::<Result<Vec<_>>>()?;
    let samples = add_noise(&clean, noise, seed);
    let kind = if noise.is_zero() && samples.iter().all(|v| *v >= 0.0) {
        TraceKind::Intensity
    } else {
        TraceKind::Signal
    };
    TimeTrace::sampled(kind, t_grid.to_vec(), samples)
}

/// `n` points log-spaced over [start, stop].
pub fn log_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    let (a, b) = (start.ln(), stop.ln());
    (0..n)
        .map(|i| match i {
            0 => start,
            _ if i == n - 1 => stop,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

pub fn linear_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
        .collect()
}
