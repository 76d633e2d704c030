use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5; // 1 / (2 √(2 ln 2))

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ToothShape {
    Gaussian,
    Square,
}

impl ToothShape {
    /// Unit-height tooth evaluated at `x` tooth-FWHMs from its centre.
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ToothShape::Gaussian => (-4.0 * std::f64::consts::LN_2 * x * x).exp(),
            ToothShape::Square => {
                if x.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-extent beyond which the tooth is negligible, in FWHM units.
    fn reach(self) -> f64 {
        match self {
            ToothShape::Gaussian => 4.0,
            ToothShape::Square => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ToothShape::Gaussian => "gaussian",
            ToothShape::Square => "square",
        }
    }
}

/// Atomic-frequency-comb absorption design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    /// Tooth spacing Δ.
    pub delta: f64,
    /// Δ / tooth FWHM.
    pub finesse: f64,
    /// Peak optical depth above background.
    pub d1: f64,
    /// Background optical depth.
    pub d0: f64,
    pub bandwidth: f64,
    pub center_detuning: f64,
    pub tooth_shape: ToothShape,
}

impl CombSpec {
    pub fn new(
        delta: f64,
        finesse: f64,
        d1: f64,
        d0: f64,
        bandwidth: f64,
        center_detuning: f64,
        tooth_shape: ToothShape,
    ) -> Result<Self> {
        let spec = CombSpec {
            delta,
            finesse,
            d1,
            d0,
            bandwidth,
            center_detuning,
            tooth_shape,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta", "must be > 0"));
        }
        if !(self.finesse > 1.0 && self.finesse.is_finite()) {
            return Err(Error::invalid("finesse", "must be > 1"));
        }
        if !(self.d1 >= 0.0 && self.d1.is_finite()) {
            return Err(Error::invalid("d1", "must be >= 0"));
        }
        if !(self.d0 >= 0.0 && self.d0.is_finite()) {
            return Err(Error::invalid("d0", "must be >= 0"));
        }
        if !(self.bandwidth >= self.delta && self.bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", "must be >= delta"));
        }
        if !self.center_detuning.is_finite() {
            return Err(Error::invalid("center_detuning", "must be finite"));
        }
        Ok(())
    }

    /// γ = Δ / F.
    pub fn tooth_fwhm(&self) -> f64 {
        self.delta / self.finesse
    }

    pub fn storage_time(&self) -> f64 {
        1.0 / self.delta
    }

    pub fn band(&self) -> (f64, f64) {
        let half = 0.5 * self.bandwidth;
        (self.center_detuning - half, self.center_detuning + half)
    }

    fn tooth_indices(&self) -> std::ops::RangeInclusive<i64> {
        // k Δ in [-B/2, B/2)
        let half = 0.5 * self.bandwidth / self.delta;
        let lo = (-half - 1e-9).ceil() as i64;
        let hi = (half - 1e-9).ceil() as i64 - 1;
        lo..=hi
    }

    pub fn tooth_centers(&self) -> Vec<f64> {
        self.tooth_indices()
            .map(|k| self.center_detuning + k as f64 * self.delta)
            .collect()
    }

    pub fn tooth_count(&self) -> usize {
        self.tooth_centers().len()
    }

    /// Optical depth at detuning `f`.
    pub fn depth(&self, f: f64) -> f64 {
        self.d0 + self.d1 * self.teeth(f)
    }

    fn teeth(&self, f: f64) -> f64 {
        let gamma = self.tooth_fwhm();
        let indices = self.tooth_indices();
        let x = (f - self.center_detuning) / self.delta;
        let reach = self.tooth_shape.reach() * gamma / self.delta;
        let lo = ((x - reach).floor() as i64).max(*indices.start());
        let hi = ((x + reach).ceil() as i64).min(*indices.end());
        (lo..=hi)
            .map(|k| {
                let center = self.center_detuning + k as f64 * self.delta;
                self.tooth_shape.eval((f - center) / gamma)
            })
            .sum()
    }

    pub fn tooth_sigma(&self) -> f64 {
        self.tooth_fwhm() * FWHM_TO_SIGMA
    }
}

/// Sampled optical depth on a uniform frequency grid. Outside the grid the
/// medium is treated as the flat `background`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombProfile {
    f_start: f64,
    df: f64,
    depth: Vec<f64>,
    background: f64,
    /// Tooth spacings of the combs that make up this profile (empty if unknown).
    spacings: Vec<f64>,
    band: (f64, f64),
}

impl CombProfile {
    /// Builds a profile from explicit samples; rejects non-uniform grids.
    pub fn from_samples(freqs: &[f64], depth: Vec<f64>, background: f64) -> Result<Self> {
        if freqs.len() != depth.len() || freqs.len() < 2 {
            return Err(Error::invalid("depth", "need >= 2 samples matching the grid"));
        }
        if depth.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::invalid("depth", "optical depth must be finite and >= 0"));
        }
        let n = freqs.len();
        let df = (freqs[n - 1] - freqs[0]) / (n - 1) as f64;
        if !(df > 0.0) {
            return Err(Error::UnsortedGrid { index: 1 });
        }
        for (i, f) in freqs.iter().enumerate() {
            if (f - (freqs[0] + i as f64 * df)).abs() > 1e-6 * df {
                return Err(Error::NonUniformGrid { index: i });
            }
        }
        Ok(CombProfile {
            f_start: freqs[0],
            df,
            depth,
            background,
            spacings: Vec::new(),
            band: (freqs[0], freqs[n - 1]),
        })
    }

    pub fn f_start(&self) -> f64 {
        self.f_start
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Frequency extent of the absorbing structure.
    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn bandwidth(&self) -> f64 {
        self.band.1 - self.band.0
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.depth.len())
            .map(|i| self.f_start + i as f64 * self.df)
            .collect()
    }

    /// Linear interpolation inside the grid, background outside.
    pub fn eval(&self, f: f64) -> f64 {
        let x = (f - self.f_start) / self.df;
        let last = (self.depth.len() - 1) as f64;
        if !(x >= 0.0 && x <= last) {
            return self.background;
        }
        let i = (x.floor() as usize).min(self.depth.len() - 2);
        let frac = x - i as f64;
        self.depth[i] + frac * (self.depth[i + 1] - self.depth[i])
    }

    /// Same profile seen from a frame whose zero sits at `reference`.
    pub fn shifted(&self, reference: f64) -> CombProfile {
        CombProfile {
            f_start: self.f_start - reference,
            band: (self.band.0 - reference, self.band.1 - reference),
            ..self.clone()
        }
    }
}

fn check_resolution(spec: &CombSpec, resolution: f64) -> Result<()> {
    let limit = spec.tooth_fwhm() / 10.0;
    if !(resolution > 0.0) || resolution > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse { resolution, limit });
    }
    Ok(())
}

/// Samples the comb on a uniform grid with step `resolution`, one tooth
/// spacing of margin on each side of the band.
pub fn build_comb(spec: &CombSpec, resolution: f64) -> Result<CombProfile> {
    build_composite(std::slice::from_ref(spec), resolution)
}

/// Superposition of disjoint combs over a common background (the largest d0).
pub fn build_composite(specs: &[CombSpec], resolution: f64) -> Result<CombProfile> {
    if specs.is_empty() {
        return Err(Error::invalid("specs", "need at least one comb"));
    }
    for spec in specs {
        spec.check()?;
        check_resolution(spec, resolution)?;
    }
    let lo = specs
        .iter()
        .map(|s| s.band().0 - s.delta)
        .fold(f64::INFINITY, f64::min);
    let hi = specs
        .iter()
        .map(|s| s.band().1 + s.delta)
        .fold(f64::NEG_INFINITY, f64::max);
    let n = ((hi - lo) / resolution).ceil() as usize + 1;
    let background = specs.iter().map(|s| s.d0).fold(0.0, f64::max);
    let depth = (0..n)
        .map(|i| {
            let f = lo + i as f64 * resolution;
            background + specs.iter().map(|s| s.d1 * s.teeth(f)).sum::<f64>()
        })
        .collect();
    let band = (
        specs.iter().map(|s| s.band().0).fold(f64::INFINITY, f64::min),
        specs.iter().map(|s| s.band().1).fold(f64::NEG_INFINITY, f64::max),
    );
    Ok(CombProfile {
        f_start: lo,
        df: resolution,
        depth,
        background,
        spacings: specs.iter().map(|s| s.delta).collect(),
        band,
    })
}

/// η = d̃² e^{−d̃} e^{−7/F²} e^{−d₀}, d̃ = d₁/F (Gaussian teeth, forward recall).
pub fn analytic_efficiency(spec: &CombSpec) -> f64 {
    let dt = spec.d1 / spec.finesse;
    dt * dt * (-dt).exp() * (-7.0 / (spec.finesse * spec.finesse)).exp() * (-spec.d0).exp()
}

/// Comb dephasing factor e^{−7/F²} of the analytic efficiency.
pub fn dephasing_factor(finesse: f64) -> f64 {
    (-7.0 / (finesse * finesse)).exp()
}

/// Peak depth d₁ on the low-depth branch (d̃ < 2) giving efficiency `eta`
/// for fixed finesse and background.
pub fn solve_peak_depth(eta: f64, finesse: f64, d0: f64) -> Result<f64> {
    let f = |dt: f64| dt * dt * (-dt).exp() * dephasing_factor(finesse) * (-d0).exp() - eta;
    let (mut lo, mut hi) = (0.0, 2.0);
    if !(f(lo) < 0.0 && f(hi) > 0.0) {
        return Err(Error::Domain(format!(
            "efficiency {eta} unreachable for F = {finesse}, d0 = {d0}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) * finesse)
}
