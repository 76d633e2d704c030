//! Photon-echo decay, time-dependent effective linewidth, persistent-hole
//! broadening and the field/temperature dependence of spectral diffusion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    FieldPoint, PhysicalConstants, PopulationAmplitudes, PopulationLifetimes,
    SpectralDiffusionParams,
};
use crate::noise::{add_noise, Noise};
use crate::trace::{TimeTrace, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EchoAxis {
    /// Pulse separation t₁₂ of a two-pulse echo.
    T12,
    /// Waiting time t₂₃ of a three-pulse echo at fixed t₁₂.
    T23,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoDecayCurve {
    pub axis: EchoAxis,
    pub grid: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Set for three-pulse curves.
    pub fixed_t12: Option<f64>,
}

impl EchoDecayCurve {
    pub fn new(
        axis: EchoAxis,
        grid: Vec<f64>,
        intensities: Vec<f64>,
        fixed_t12: Option<f64>,
    ) -> Result<Self> {
        if grid.len() != intensities.len() {
            return Err(Error::invalid("intensities", "length differs from grid"));
        }
        if grid.is_empty() {
            return Err(Error::invalid("grid", "must be non-empty"));
        }
        check_strictly_increasing(&grid)?;
        if intensities.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("intensities", "must be finite and >= 0"));
        }
        match (axis, fixed_t12) {
            (EchoAxis::T23, None) => {
                return Err(Error::invalid("fixed_t12", "required for three-pulse curves"))
            }
            (EchoAxis::T23, Some(t)) if !(t >= 0.0) => {
                return Err(Error::invalid("fixed_t12", "must be >= 0"))
            }
            _ => {}
        }
        Ok(EchoDecayCurve {
            axis,
            grid,
            intensities,
            fixed_t12,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

fn check_strictly_increasing(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("grid", "must be finite"));
    }
    match grid.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(Error::UnsortedGrid { index: i + 1 }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HomogeneousLinewidth {
    gamma_h: f64,
}

impl HomogeneousLinewidth {
    pub fn new(gamma_h: f64) -> Result<Self> {
        if !(gamma_h > 0.0 && gamma_h.is_finite()) {
            return Err(Error::invalid("gamma_h", "must be > 0"));
        }
        Ok(HomogeneousLinewidth { gamma_h })
    }

    pub fn hertz(self) -> f64 {
        self.gamma_h
    }

    /// Coherence time T₂ = 1/(π Γ_h).
    pub fn t2(self) -> f64 {
        1.0 / (PI * self.gamma_h)
    }
}

/// Γ_h = 1/(π T₂).
pub fn linewidth_from_t2(t2: f64) -> Result<HomogeneousLinewidth> {
    if !(t2 > 0.0 && t2.is_finite()) {
        return Err(Error::invalid("t2", "must be > 0"));
    }
    HomogeneousLinewidth::new(1.0 / (PI * t2))
}

/// I₀ e^{-4π Γ_h t₁₂}.
pub fn two_pulse_intensity(t12: f64, gamma_h: f64, i0: f64) -> Result<f64> {
    if !(t12 >= 0.0) {
        return Err(Error::invalid("t12", "must be >= 0"));
    }
    if !(i0 >= 0.0) {
        return Err(Error::invalid("i0", "must be >= 0"));
    }
    Ok(i0 * (-4.0 * PI * gamma_h * t12).exp())
}

/// Γ₀ + γ_TLS ln(t₂₃/t₀) + ½Γ_SD (R_SD t₁₂ + 1 − e^{−R_SD t₂₃}).
pub fn effective_linewidth(t12: f64, t23: f64, p: &SpectralDiffusionParams) -> Result<f64> {
    if !(t12 >= 0.0) {
        return Err(Error::invalid("t12", "must be >= 0"));
    }
    if !(t23 >= p.t0) {
        return Err(Error::Domain(format!(
            "t23 = {t23} s is below the reference time t0 = {} s",
            p.t0
        )));
    }
    Ok(effective_linewidth_unchecked(t12, t23, p))
}

pub(crate) fn effective_linewidth_unchecked(t12: f64, t23: f64, p: &SpectralDiffusionParams) -> f64 {
    p.gamma0
        + p.gamma_tls * (t23 / p.t0).ln()
        + 0.5 * p.gamma_sd * (p.r_sd * t12 - (-p.r_sd * t23).exp_m1())
}

/// Grating-contrast factor C₁e^{−t/T₁} + C_Be^{−t/T_B} + C_Ze^{−t/T_Z}.
pub fn population_factor(t23: f64, amps: &PopulationAmplitudes, lifetimes: &PopulationLifetimes) -> f64 {
    amps.c1 * (-t23 / lifetimes.t1).exp()
        + amps.cb * (-t23 / lifetimes.tb).exp()
        + amps.cz * (-t23 / lifetimes.tz).exp()
}

/// I₀ I_pop²(t₂₃) e^{−4π t₁₂ Γ_eff(t₂₃)}.
pub fn three_pulse_intensity(
    t12: f64,
    t23: f64,
    amps: &PopulationAmplitudes,
    lifetimes: &PopulationLifetimes,
    p: &SpectralDiffusionParams,
    i0: f64,
) -> Result<f64> {
    let gamma_eff = effective_linewidth(t12, t23, p)?;
    let pop = population_factor(t23, amps, lifetimes);
    Ok(i0 * pop * pop * (-4.0 * PI * t12 * gamma_eff).exp())
}

/// Persistent-hole full width 2[Γ₀ + ½Γ_SD(1 − e^{−R_SD t})]; no TLS term.
pub fn hole_width(t: f64, p: &SpectralDiffusionParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "must be >= 0"));
    }
    Ok(hole_width_unchecked(t, p.gamma0, p.gamma_sd, p.r_sd))
}

pub(crate) fn hole_width_unchecked(t: f64, gamma0: f64, gamma_sd: f64, r_sd: f64) -> f64 {
    2.0 * gamma0 - gamma_sd * (-r_sd * t).exp_m1()
}

/// sech²(g μ_B B / 2 k_B T); even in `b`.
pub fn sech2_factor(g: f64, b: f64, temperature: f64, consts: &PhysicalConstants) -> f64 {
    let x = g * consts.bohr_magneton * b / (2.0 * consts.boltzmann * temperature);
    let c = x.cosh();
    1.0 / (c * c)
}

/// Γ_SD(B, T) = Γ_max sech²(g μ_B B / 2 k_B T).
pub fn sd_vs_field(fp: &FieldPoint, g: f64, gamma_max: f64, consts: &PhysicalConstants) -> Result<f64> {
    if !(fp.temperature > 0.0) {
        return Err(Error::invalid("temperature", "must be > 0"));
    }
    Ok(gamma_max * sech2_factor(g, fp.b_field, fp.temperature, consts))
}

fn clamp_noisy(values: Vec<f64>) -> Vec<f64> {
    // detected intensity cannot go negative
    values.into_iter().map(|v| v.max(0.0)).collect()
}

pub fn synthesize_2ppe(
    gamma_h: f64,
    i0: f64,
    grid: &[f64],
    noise: Noise,
    seed: u64,
) -> Result<EchoDecayCurve> {
    noise.check()?;
    check_strictly_increasing(grid)?;
    let clean = grid
        .iter()
        .map(|&t| two_pulse_intensity(t, gamma_h, i0))
        .collect::<Result<Vec<_>>>()?;
    let noisy = clamp_noisy(add_noise(&clean, noise, seed));
    EchoDecayCurve::new(EchoAxis::T12, grid.to_vec(), noisy, None)
}

/// Hole full widths on `grid` as a linewidth trace (relative noise).
pub fn synthesize_hole_widths(
    p: &SpectralDiffusionParams,
    grid: &[f64],
    noise: Noise,
    seed: u64,
) -> Result<TimeTrace> {
    noise.check()?;
    check_strictly_increasing(grid)?;
    let clean = grid
        .iter()
        .map(|&t| hole_width(t, p))
        .collect::<Result<Vec<_>>>()?;
    TimeTrace::sampled(TraceKind::Linewidth, grid.to_vec(), add_noise(&clean, noise, seed))
}

/// Parameters of a three-pulse echo measurement at one t₁₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePulseSetup {
    pub t12: f64,
    pub amplitudes: PopulationAmplitudes,
    pub lifetimes: PopulationLifetimes,
    pub diffusion: SpectralDiffusionParams,
    pub i0: f64,
}

pub fn synthesize_3ppe(
    setup: &ThreePulseSetup,
    grid: &[f64],
    noise: Noise,
    seed: u64,
) -> Result<EchoDecayCurve> {
    noise.check()?;
    check_strictly_increasing(grid)?;
    if let Some(&t) = grid.iter().find(|&&t| t < setup.diffusion.t0) {
        return Err(Error::Domain(format!(
            "t23 = {t} s is below the reference time t0 = {} s",
            setup.diffusion.t0
        )));
    }
    let clean = grid
        .iter()
        .map(|&t23| {
            three_pulse_intensity(
                setup.t12,
                t23,
                &setup.amplitudes,
                &setup.lifetimes,
                &setup.diffusion,
                setup.i0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let noisy = clamp_noisy(add_noise(&clean, noise, seed));
    EchoDecayCurve::new(EchoAxis::T23, grid.to_vec(), noisy, Some(setup.t12))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CODATA;
    use proptest::prelude::*;

    fn measured_sd(gamma0: f64) -> SpectralDiffusionParams {
        SpectralDiffusionParams::new(gamma0, 0.0, 5820.0, 200.0, 160e-6).unwrap()
    }

    #[test]
    fn linewidth_examples() {
        let g = linewidth_from_t2(552e-6).unwrap();
        assert!((g.hertz() - 576.648_344_535_852_7).abs() < 1e-9);
        assert!((g.t2() - 552e-6).abs() <= 552e-6 * 1e-15);
        assert!((linewidth_from_t2(1.0 / PI).unwrap().hertz() - 1.0).abs() < 1e-15);
        assert!((linewidth_from_t2(1.1e-3).unwrap().hertz() - 289.372_623_803_446).abs() < 1e-9);
        assert!(linewidth_from_t2(0.0).is_err());
        assert!(linewidth_from_t2(-1e-3).is_err());
    }

    #[test]
    fn two_pulse_examples() {
        assert_eq!(two_pulse_intensity(0.0, 576.7, 2.5).unwrap(), 2.5);
        let g = linewidth_from_t2(552e-6).unwrap().hertz();
        let i = two_pulse_intensity(552e-6 / 4.0, g, 1.0).unwrap();
        assert!((i - (-1.0f64).exp()).abs() < 1e-15);
        let one = two_pulse_intensity(1e-4, g, 1.0).unwrap();
        let two = two_pulse_intensity(2e-4, g, 1.0).unwrap();
        assert!((two - one * one).abs() < 1e-15);
        assert!(two_pulse_intensity(-1e-6, g, 1.0).is_err());
    }

    #[test]
    fn effective_linewidth_examples() {
        let p = measured_sd(300.0);
        let g = effective_linewidth(60e-6, 160e-6, &p).unwrap();
        // ½·5820·(0.012 + 1 − e^{−0.032})
        assert!((g - 300.0 - 126.565_846_149_535).abs() < 1e-9);
        let far = effective_linewidth(60e-6, 10.0, &p).unwrap();
        assert!((far - (300.0 + 0.5 * 5820.0 * (200.0 * 60e-6 + 1.0))).abs() < 1e-9);
        let flat = SpectralDiffusionParams::new(300.0, 0.0, 0.0, 200.0, 160e-6).unwrap();
        assert_eq!(effective_linewidth(1e-3, 5.0, &flat).unwrap(), 300.0);
        assert!(matches!(effective_linewidth(60e-6, 100e-6, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn three_pulse_examples() {
        let amps = PopulationAmplitudes::default();
        let lt = PopulationLifetimes::new(1.99e-3, 55.14e-3, 60.0).unwrap();
        let p = SpectralDiffusionParams::new(300.0, 0.0, 0.0, 0.0, 160e-6).unwrap();
        let i = three_pulse_intensity(60e-6, 160e-6, &amps, &lt, &p, 2.0).unwrap();
        let pop = population_factor(160e-6, &amps, &lt);
        let expect = 2.0 * pop * pop * (-4.0 * PI * 60e-6 * 300.0).exp();
        assert!((i - expect).abs() < 1e-15);

        // single population component: ln I linear in t23 with slope −2/T1
        let only = PopulationAmplitudes::new(1.0, 0.0, 0.0).unwrap();
        let f = |t: f64| three_pulse_intensity(60e-6, t, &only, &lt, &p, 1.0).unwrap().ln();
        let slope = (f(3e-3) - f(1e-3)) / 2e-3;
        assert!((slope + 2.0 / 1.99e-3).abs() < 1e-6 * 2.0 / 1.99e-3);
    }

    #[test]
    fn hole_width_examples() {
        let p = SpectralDiffusionParams::new(20e3, 0.0, 105e3, 0.01, 1.0).unwrap();
        assert_eq!(hole_width(0.0, &p).unwrap(), 40e3);
        assert!((hole_width(1e5, &p).unwrap() - (40e3 + 105e3)).abs() < 1e-6);
        let at = hole_width(100.0, &p).unwrap();
        assert!((at - (40e3 + 105e3 * (1.0 - (-1.0f64).exp()))).abs() < 1e-9);
        assert!(hole_width(-1.0, &p).is_err());
    }

    #[test]
    fn sech_examples() {
        let gm = 36e3;
        let fp = FieldPoint::new(0.0, 0.6).unwrap();
        assert_eq!(sd_vs_field(&fp, 0.01, gm, &CODATA).unwrap(), gm);
        let fp = FieldPoint::new(0.1, 0.6).unwrap();
        let rel = 1.0 - sd_vs_field(&fp, 0.01, gm, &CODATA).unwrap() / gm;
        assert!((rel - 3.133e-7).abs() < 1e-10, "{rel}");
        let hot = FieldPoint::new(0.5, 1e12).unwrap();
        assert!((sd_vs_field(&hot, 0.01, gm, &CODATA).unwrap() - gm).abs() < 1e-9);
    }

    #[test]
    fn synthesized_2ppe_contract() {
        let c = synthesize_2ppe(576.7, 3.0, &[0.0], Noise::None, 0).unwrap();
        assert_eq!(c.intensities, vec![3.0]);
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 1e-4).collect();
        let a = synthesize_2ppe(289.0, 1.0, &grid, Noise::Relative(0.01), 11).unwrap();
        let b = synthesize_2ppe(289.0, 1.0, &grid, Noise::Relative(0.01), 11).unwrap();
        assert_eq!(a, b);
        assert!(synthesize_2ppe(289.0, 1.0, &[1e-3, 0.0], Noise::None, 0).is_err());
    }

    #[test]
    fn synthesized_3ppe_rejects_short_t23() {
        let setup = ThreePulseSetup {
            t12: 60e-6,
            amplitudes: PopulationAmplitudes::default(),
            lifetimes: PopulationLifetimes::new(1.99e-3, 55.14e-3, 60.0).unwrap(),
            diffusion: measured_sd(300.0),
            i0: 1.0,
        };
        assert!(synthesize_3ppe(&setup, &[100e-6, 1e-3], Noise::None, 0).is_err());
        assert!(synthesize_3ppe(&setup, &[160e-6, 1e-3], Noise::None, 0).is_ok());
    }

    proptest! {
        #[test]
        fn gamma_eff_monotone(
            g0 in 1.0f64..1e3, tls in 0.0f64..100.0, gsd in 0.0f64..1e4, r in 0.0f64..1e3,
            t12 in 0.0f64..1e-3, t23 in 1e-4f64..1.0, dt in 0.0f64..1.0, d12 in 0.0f64..1e-3,
        ) {
            let p = SpectralDiffusionParams::new(g0, tls, gsd, r, 1e-4).unwrap();
            let base = effective_linewidth(t12, t23, &p).unwrap();
            prop_assert!(effective_linewidth(t12, t23 + dt, &p).unwrap() >= base);
            prop_assert!(effective_linewidth(t12 + d12, t23, &p).unwrap() >= base);
        }

        #[test]
        fn hole_width_bounded_and_monotone(
            g0 in 1.0f64..1e5, gsd in 0.0f64..2e5, r in 1e-4f64..10.0,
            t in 0.0f64..1e4, dt in 0.0f64..1e3,
        ) {
            let p = SpectralDiffusionParams::new(g0, 0.0, gsd, r, 1.0).unwrap();
            let w = hole_width(t, &p).unwrap();
            prop_assert!(hole_width(t + dt, &p).unwrap() >= w);
            prop_assert!(w <= 2.0 * g0 + gsd + 1e-9 * (g0 + gsd));
            let at = hole_width(1.0 / r, &p).unwrap() - 2.0 * g0;
            prop_assert!((at - gsd * (1.0 - (-1.0f64).exp())).abs() <= 1e-9 * gsd.max(1.0));
        }

        #[test]
        fn sech_even_and_non_increasing(
            g in 1e-5f64..1.0, b in 0.0f64..10.0, db in 0.0f64..1.0, temp in 0.05f64..10.0,
        ) {
            let f = |b: f64| sech2_factor(g, b, temp, &CODATA);
            prop_assert_eq!(f(b), f(-b));
            prop_assert!(f(b + db) <= f(b));
        }

        #[test]
        fn two_pulse_log_is_affine(
            gamma in 1.0f64..1e4, i0 in 1e-3f64..1e3, t in 0.0f64..1e-3, dt in 1e-6f64..1e-3,
        ) {
            let l0 = two_pulse_intensity(t, gamma, i0).unwrap().ln();
            let l1 = two_pulse_intensity(t + dt, gamma, i0).unwrap().ln();
            let slope = (l1 - l0) / dt;
            let expect = -4.0 * PI * gamma;
            // ln I spans at most ~|expect|·(t+dt), rounding of each log ~ulp of that
            let tol = 4.0 * f64::EPSILON * (l0.abs() + l1.abs() + 1.0) / dt + 1e-12 * expect.abs();
            prop_assert!((slope - expect).abs() <= tol, "{slope} vs {expect}");
        }
    }
}
