//! Echo-decay fits: homogeneous linewidth from two-pulse decays and the
//! spectral-diffusion parameters from three-pulse decays.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lm::{self, linear_lstsq, LmConfig, ParamSpec, Residuals};
use super::{solve, FitProblem, FitResult, Model, Space};
use crate::coherence::{EchoAxis, EchoDecayCurve};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{PopulationAmplitudes, PopulationLifetimes};

fn positive_points(curve: &EchoDecayCurve) -> (Vec<f64>, Vec<f64>, usize) {
    let mut x = Vec::with_capacity(curve.len());
    let mut y = Vec::with_capacity(curve.len());
    for (&t, &v) in curve.grid.iter().zip(&curve.intensities) {
        if v > 0.0 {
            x.push(t);
            y.push(v);
        }
    }
    let dropped = curve.len() - x.len();
    (x, y, dropped)
}

impl FitProblem {
    /// I₀e^{−4πΓ_h t} on log-intensity; non-positive points are left out.
    pub fn two_pulse(curve: &EchoDecayCurve) -> Result<FitProblem> {
        if curve.axis != EchoAxis::T12 {
            return Err(Error::invalid("curve", "expected a two-pulse (t12) decay"));
        }
        let (x, y, _) = positive_points(curve);
        if x.len() < 3 {
            return Err(Error::invalid("curve", "need at least 3 positive points"));
        }
        let t_max = x[x.len() - 1];
        let dt = super::min_spacing(&x);
        let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = y.iter().copied().fold(0.0, f64::max);
        let params = vec![
            ParamSpec::new("gamma_h", "Hz", 1e-2 / (4.0 * PI * t_max), 1e2 / (4.0 * PI * dt), true),
            ParamSpec::new("i0", "arb", y_min * 1e-2, y_max * 1e2, true),
        ];
        FitProblem::new(Model::TwoPulse, x, y, Space::Log, params)
    }
}

/// Straight-line fit of ln I against t₁₂; Γ_h = −slope/4π and T₂ = 1/(πΓ_h).
pub fn fit_two_pulse(curve: &EchoDecayCurve) -> Result<FitResult> {
    if curve.axis != EchoAxis::T12 {
        return Err(Error::invalid("curve", "expected a two-pulse (t12) decay"));
    }
    let (x, y, dropped) = positive_points(curve);
    let m = x.len();
    if m < 2 {
        return Err(Error::invalid("curve", "need at least 2 positive points"));
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = m as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = ly.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - x_mean).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&ly).map(|(a, b)| (a - x_mean) * (b - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let rss: f64 = x
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let (var_slope, var_icpt) = if m > 2 {
        let s2 = rss / (n - 2.0);
        (s2 / sxx, s2 * (1.0 / n + x_mean * x_mean / sxx))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    let gamma = -slope / (4.0 * PI);
    let sigma_gamma = var_slope.sqrt() / (4.0 * PI);
    let i0 = intercept.exp();
    let mut out = FitResult {
        model: "two_pulse".into(),
        estimates: Vec::new(),
        rss,
        iterations: 1,
        converged: gamma > 0.0,
        dropped_points: dropped,
        warnings: Vec::new(),
    };
    if dropped > 0 {
        out.warnings.push(format!("{dropped} non-positive intensities dropped"));
    }
    if !(gamma > 0.0) {
        out.warnings.push("decay rate is not positive; no linewidth can be assigned".into());
    }
    out.push("gamma_h", gamma, sigma_gamma, "Hz");
    out.push("t2", 1.0 / (PI * gamma), sigma_gamma / (PI * gamma * gamma), "s");
    out.push("i0", i0, i0 * var_icpt.sqrt(), "arb");
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum AmplitudeMode {
    /// Estimated jointly from the decays first.
    #[default]
    Floated,
    Fixed(PopulationAmplitudes),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreePulseOptions {
    /// Population lifetimes (T1, T_B, T_Z), held fixed.
    pub lifetimes: PopulationLifetimes,
    pub amplitudes: AmplitudeMode,
    /// Known echo scale; without it Γ₀ needs decays at several t₁₂.
    pub i0: Option<f64>,
    pub freeze_tls: bool,
    /// Reference time of the TLS term; defaults to the shortest t₂₃.
    pub t0: Option<f64>,
    /// Known noise of ln I; estimated from the residuals otherwise.
    pub noise_sigma: Option<f64>,
    pub lm: LmConfig,
}

impl ThreePulseOptions {
    pub fn new(lifetimes: PopulationLifetimes) -> Self {
        ThreePulseOptions {
            lifetimes,
            amplitudes: AmplitudeMode::Floated,
            i0: None,
            freeze_tls: false,
            t0: None,
            noise_sigma: None,
            lm: LmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthPoint {
    pub t12: f64,
    pub t23: f64,
    pub gamma_eff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreePulseFit {
    pub amplitudes: PopulationAmplitudes,
    /// Joint amplitude fit of the first stage, if amplitudes were floated.
    pub amplitude_fit: Option<FitResult>,
    pub points: Vec<LinewidthPoint>,
    /// Second-stage problem: the effective-linewidth model on `points`.
    pub problem: FitProblem,
    pub result: FitResult,
}

impl ThreePulseFit {
    /// Fitted Γ_eff at each t₂₃ of `grid`, evaluated at `t12`.
    pub fn curve(&self, t12: f64, grid: &[f64]) -> Vec<f64> {
        let r = &self.result;
        let (tls, t0) = match &self.problem.model {
            Model::EffectiveLinewidth { t0, .. } => (r.value("gamma_tls"), *t0),
            _ => unreachable!("three-pulse problems use the effective-linewidth model"),
        };
        let (g0, gsd, rate) = (r.value("gamma0"), r.value("gamma_sd"), r.value("r_sd"));
        grid.iter()
            .map(|&t| g0 + tls * (t / t0).ln() + 0.5 * gsd * (rate * t12 - (-rate * t).exp_m1()))
            .collect()
    }
}

struct Flat {
    t12: Vec<f64>,
    t23: Vec<f64>,
    ln_y: Vec<f64>,
}

fn flatten(curves: &[EchoDecayCurve]) -> Result<(Flat, usize)> {
    let mut flat = Flat { t12: Vec::new(), t23: Vec::new(), ln_y: Vec::new() };
    let mut dropped = 0;
    for c in curves {
        if c.axis != EchoAxis::T23 {
            return Err(Error::invalid("curves", "expected three-pulse (t23) decays"));
        }
        let t12 = c.fixed_t12.ok_or_else(|| Error::invalid("curves", "missing t12"))?;
        if !(t12 > 0.0) {
            return Err(Error::invalid("t12", "must be > 0"));
        }
        let (x, y, d) = positive_points(c);
        dropped += d;
        for (t, v) in x.into_iter().zip(y) {
            flat.t12.push(t12);
            flat.t23.push(t);
            flat.ln_y.push(v.ln());
        }
    }
    Ok((flat, dropped))
}

fn ipop(t: f64, c: [f64; 3], lt: &PopulationLifetimes) -> f64 {
    c[0] * (-t / lt.t1).exp() + c[1] * (-t / lt.tb).exp() + c[2] * (-t / lt.tz).exp()
}

/// First stage with floated amplitudes: ln I = S + 2 ln I_pop − 4πt₁₂ G(t₂₃)
/// with C_Z = 1 − C₁ − C_B, fitted jointly over all decays.
struct Joint<'a> {
    flat: &'a Flat,
    lifetimes: PopulationLifetimes,
    t0: f64,
    tls: bool,
    /// Γ₀ separable from S only with several t₁₂.
    offset: bool,
}

impl Joint<'_> {
    fn specs(&self, flat: &Flat) -> Vec<ParamSpec> {
        let (t_min, t_max) = range(&flat.t23);
        let t12_max = flat.t12.iter().copied().fold(0.0, f64::max);
        let rate_scale = 1.0 / (4.0 * PI * t12_max);
        let mut s = vec![
            ParamSpec::new("log_scale", "", -60.0, 60.0, false),
            ParamSpec::new("c1", "", 0.0, 1.0, false),
            ParamSpec::new("cb", "", 0.0, 1.0, false),
        ];
        if self.offset {
            s.push(ParamSpec::new("gamma0", "Hz", -1e3 * rate_scale, 1e3 * rate_scale, false));
        }
        if self.tls {
            s.push(ParamSpec::new("gamma_tls", "Hz", 0.0, 1e2 * rate_scale, false));
        }
        s.push(ParamSpec::new("gamma_sd", "Hz", 0.0, 1e3 * rate_scale, false));
        s.push(ParamSpec::new("r_sd", "Hz", 0.1 / t_max, 10.0 / t_min, true));
        s
    }

    fn amplitudes(p: &[f64]) -> [f64; 3] {
        [p[1], p[2], 1.0 - p[1] - p[2]]
    }
}

impl Residuals for Joint<'_> {
    fn len(&self) -> usize {
        self.flat.t23.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let c = Joint::amplitudes(p);
        let mut k = 3;
        let mut next = || {
            k += 1;
            p[k - 1]
        };
        let g0 = if self.offset { next() } else { 0.0 };
        let tls = if self.tls { next() } else { 0.0 };
        let gsd = next();
        let r = next();
        for (i, o) in out.iter_mut().enumerate() {
            let (t12, t) = (self.flat.t12[i], self.flat.t23[i]);
            let g = g0 + tls * (t / self.t0).ln() + 0.5 * gsd * (r * t12 - (-r * t).exp_m1());
            let model = p[0] + 2.0 * ipop(t, c, &self.lifetimes).max(1e-300).ln() - 4.0 * PI * t12 * g;
            *o = self.flat.ln_y[i] - model;
        }
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    (
        v.iter().copied().fold(f64::INFINITY, f64::min),
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn distinct_t12(flat: &Flat) -> usize {
    let mut t: Vec<f64> = flat.t12.clone();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.len()
}

impl FitProblem {
    /// Second stage: the effective-linewidth model on extracted Γ_eff points,
    /// residuals in log-intensity units (weight 4πt₁₂).
    pub fn effective_linewidth(
        points: &[LinewidthPoint],
        t0: f64,
        tls: bool,
        scale_term: bool,
    ) -> Result<FitProblem> {
        if points.is_empty() {
            return Err(Error::invalid("points", "no linewidth points"));
        }
        let x: Vec<f64> = points.iter().map(|p| p.t23).collect();
        let y: Vec<f64> = points.iter().map(|p| p.gamma_eff).collect();
        let t12: Vec<f64> = points.iter().map(|p| p.t12).collect();
        let (t_min, t_max) = range(&x);
        let (g_min, g_max) = range(&y);
        let span = (g_max - g_min).max(1e-3 * g_max.abs()).max(1.0);
        let mut params = vec![ParamSpec::new(
            "gamma0",
            "Hz",
            g_min - 20.0 * span,
            g_max + 20.0 * span,
            false,
        )];
        if tls {
            params.push(ParamSpec::new("gamma_tls", "Hz", 0.0, 10.0 * span / (t_max / t0).ln().max(1.0), false));
        }
        params.push(ParamSpec::new("gamma_sd", "Hz", 0.0, 40.0 * span, false));
        params.push(ParamSpec::new("r_sd", "Hz", 0.1 / t_max, 10.0 / t_min, true));
        if scale_term {
            params.push(ParamSpec::new("log_scale", "", -60.0, 60.0, false));
        }
        let weights = t12.iter().map(|t| 4.0 * PI * t).collect();
        let model = Model::EffectiveLinewidth { t12, t0, tls, scale_term };
        let mut problem = FitProblem::new(model, x, y, Space::Linear, params)?.with_weights(weights)?;
        problem.guesses = linear_starts(&problem);
        Ok(problem)
    }
}

/// For rates spread over the bounds, solves the remaining (linear)
/// parameters exactly and uses the results as starts.
fn linear_starts(problem: &FitProblem) -> Vec<Vec<f64>> {
    let Model::EffectiveLinewidth { t12, t0, tls, scale_term } = &problem.model else {
        return Vec::new();
    };
    let r_spec = problem.params.iter().find(|p| p.name == "r_sd").expect("present");
    let w = &problem.weights;
    (0..8)
        .filter_map(|k| {
            let r = super::grid_knot(r_spec, k, 8);
            let mut cols: Vec<Vec<f64>> = vec![w.clone()];
            if *tls {
                cols.push(problem.x.iter().zip(w).map(|(t, w)| w * (t / t0).ln()).collect());
            }
            cols.push(
                problem.x.iter().zip(t12).zip(w)
                    .map(|((t, t12), w)| w * 0.5 * (r * t12 - (-r * t).exp_m1()))
                    .collect(),
            );
            if *scale_term {
                cols.push(t12.iter().zip(w).map(|(t12, w)| -w / (4.0 * PI * t12)).collect());
            }
            let wy: Vec<f64> = problem.y.iter().zip(w).map(|(y, w)| y * w).collect();
            let c = linear_lstsq(&cols, &wy)?;
            let mut it = c.into_iter();
            let mut start = vec![it.next()?];
            if *tls {
                start.push(it.next()?);
            }
            start.push(it.next()?);
            start.push(r);
            if *scale_term {
                start.push(it.next()?);
            }
            for (v, p) in start.iter_mut().zip(&problem.params) {
                *v = v.clamp(p.lo, p.hi);
            }
            Some(start)
        })
        .collect()
}

/// Two-stage fit: Γ_eff(t₂₃) is extracted from every echo intensity given
/// the population factor, then the effective-linewidth model is fitted to
/// those points.
pub fn fit_3ppe_spectral_diffusion(
    curves: &[EchoDecayCurve],
    opts: &ThreePulseOptions,
    exec: Exec,
) -> Result<ThreePulseFit> {
    if curves.is_empty() {
        return Err(Error::invalid("curves", "need at least one decay"));
    }
    let (flat, dropped) = flatten(curves)?;
    let (t_min, t_max) = range(&flat.t23);
    if !(t_max / t_min >= 100.0) {
        return Err(Error::Identifiability(
            "gamma_sd, r_sd",
            format!(
                "t23 spans {:.2} decades; at least 2 are needed to separate the broadening from its rate",
                (t_max / t_min).log10()
            ),
        ));
    }
    let t0 = opts.t0.unwrap_or(t_min);
    if !(t0 > 0.0 && t0 <= t_min) {
        return Err(Error::invalid("t0", "must be > 0 and not after the first t23"));
    }
    let lt = opts.lifetimes;
    let multi = distinct_t12(&flat) > 1;
    let tls = !opts.freeze_tls;
    let mut warnings = Vec::new();

    let (amps, amplitude_fit) = match opts.amplitudes {
        AmplitudeMode::Fixed(a) => (a, None),
        AmplitudeMode::Floated => {
            let joint = Joint { flat: &flat, lifetimes: lt, t0, tls, offset: multi };
            let specs = joint.specs(&flat);
            let s0 = flat.ln_y[0];
            let guesses: Vec<Vec<f64>> = (0..8)
                .map(|k| {
                    let r = super::grid_knot(specs.last().expect("r_sd"), k, 8);
                    let mut g = vec![s0, 1.0 / 3.0, 1.0 / 3.0];
                    if multi {
                        g.push(0.0);
                    }
                    if tls {
                        g.push(0.0);
                    }
                    g.push(0.0);
                    g.push(r);
                    g
                })
                .collect();
            if joint.len() <= specs.len() {
                return Err(Error::invalid("curves", "too few points for the amplitude fit"));
            }
            let best = lm::multistart(&joint, &specs, &guesses, &opts.lm, exec);
            let dof = (joint.len() - specs.len()) as f64;
            let variance = opts.noise_sigma.map_or(best.rss / dof, |s| s * s);
            let sigma = lm::uncertainties(&joint, &specs, &best.x, variance);
            let c = Joint::amplitudes(&best.x);
            let mut fit = FitResult {
                model: "three_pulse_amplitudes".into(),
                estimates: Vec::new(),
                rss: best.rss,
                iterations: best.iterations,
                converged: best.converged,
                dropped_points: dropped,
                warnings: Vec::new(),
            };
            for (i, s) in specs.iter().enumerate() {
                fit.push(&s.name, best.x[i], sigma[i], &s.unit);
            }
            if c[2] < 0.0 {
                warnings.push("fitted amplitudes leave a negative Zeeman weight".into());
            }
            let amps = PopulationAmplitudes { c1: c[0], cb: c[1], cz: c[2] };
            (amps, Some(fit))
        }
    };

    let ln_i0 = opts.i0.map_or(0.0, f64::ln);
    let c = amps.as_array();
    let points: Vec<LinewidthPoint> = (0..flat.t23.len())
        .map(|i| {
            let (t12, t) = (flat.t12[i], flat.t23[i]);
            let pop = ipop(t, c, &lt).max(1e-300);
            LinewidthPoint {
                t12,
                t23: t,
                gamma_eff: -(flat.ln_y[i] - 2.0 * pop.ln() - ln_i0) / (4.0 * PI * t12),
            }
        })
        .collect();

    let scale_term = opts.i0.is_none() && multi;
    let mut problem = FitProblem::effective_linewidth(&points, t0, tls, scale_term)?;
    problem.noise_sigma = opts.noise_sigma;
    let raw = solve(&problem, &opts.lm, exec)?;

    let mut result = FitResult {
        model: "three_pulse_spectral_diffusion".into(),
        estimates: Vec::new(),
        rss: raw.rss,
        iterations: raw.iterations,
        converged: raw.converged && amplitude_fit.as_ref().is_none_or(|f| f.converged),
        dropped_points: dropped,
        warnings,
    };
    let gamma0_known = opts.i0.is_some() || multi;
    for (i, p) in problem.params.iter().enumerate() {
        let sigma = if p.name == "gamma0" && !gamma0_known { f64::INFINITY } else { raw.sigma[i] };
        result.push(&p.name, raw.x[i], sigma, &p.unit);
        if p.name == "gamma0" && !tls {
            result.push("gamma_tls", 0.0, 0.0, "Hz");
        }
    }
    if !gamma0_known {
        result.warnings.push(
            "gamma0 is offset by the unknown echo scale; supply i0 or decays at several t12".into(),
        );
    }
    let amp_sigma = |name: &str| {
        amplitude_fit
            .as_ref()
            .and_then(|f| f.get(name))
            .map_or(0.0, |e| e.uncertainty)
    };
    result.push("c1", amps.c1, amp_sigma("c1"), "");
    result.push("cb", amps.cb, amp_sigma("cb"), "");
    let cz_sigma = if amplitude_fit.is_some() {
        (amp_sigma("c1").powi(2) + amp_sigma("cb").powi(2)).sqrt()
    } else {
        0.0
    };
    result.push("cz", amps.cz, cz_sigma, "");
    if dropped > 0 {
        result.warnings.push(format!("{dropped} non-positive intensities dropped"));
    }
    if !result.converged {
        result.warnings.push("optimizer did not converge from any start".into());
    }

    Ok(ThreePulseFit { amplitudes: amps, amplitude_fit, points, problem, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{synthesize_2ppe, synthesize_3ppe, ThreePulseSetup};
    use crate::fitting::grid_oracle;
    use crate::model::SpectralDiffusionParams;
    use crate::noise::Noise;
    use crate::population::{linear_grid, log_grid};

    #[test]
    fn noiseless_two_pulse_is_exact() {
        let curve = synthesize_2ppe(576.6483445358527, 3.0, &linear_grid(0.0, 1e-3, 12), Noise::None, 0).unwrap();
        let r = fit_two_pulse(&curve).unwrap();
        assert!((r.value("gamma_h") / 576.6483445358527 - 1.0).abs() < 1e-9);
        assert!((r.value("t2") / 552e-6 - 1.0).abs() < 1e-9);
        assert!((r.value("i0") / 3.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_points_are_interpolated() {
        let curve = EchoDecayCurve::new(EchoAxis::T12, vec![1e-4, 3e-4], vec![0.8, 0.3], None).unwrap();
        let r = fit_two_pulse(&curve).unwrap();
        let model = |t: f64| r.value("i0") * (-4.0 * PI * r.value("gamma_h") * t).exp();
        assert!((model(1e-4) - 0.8).abs() < 1e-12);
        assert!((model(3e-4) - 0.3).abs() < 1e-12);
        assert!(r.rss < 1e-25);
    }

    #[test]
    fn non_positive_points_are_dropped_and_counted() {
        let curve = EchoDecayCurve::new(
            EchoAxis::T12,
            vec![0.0, 1e-4, 2e-4, 3e-4, 4e-4],
            vec![1.0, 0.7, 0.0, 0.35, 0.0],
            None,
        )
        .unwrap();
        let r = fit_two_pulse(&curve).unwrap();
        assert_eq!(r.dropped_points, 2);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn two_pulse_regression_matches_oracle_cell() {
        let t2 = 1.1e-3;
        let gamma = 1.0 / (PI * t2);
        let curve = synthesize_2ppe(gamma, 1.0, &linear_grid(0.0, 2.0 * t2, 20), Noise::Relative(0.02), 5).unwrap();
        let r = fit_two_pulse(&curve).unwrap();
        let problem = FitProblem::two_pulse(&curve).unwrap();
        let oracle = grid_oracle(&problem, 200, Exec::Parallel).unwrap();
        assert!(r.rss <= oracle.rss);
        // neighbouring knots bracket the regression answer
        let spec = &problem.params[0];
        let ratio = (spec.hi / spec.lo).powf(1.0 / 199.0);
        assert!((r.value("gamma_h") / oracle.x[0]).ln().abs() <= ratio.ln() * (1.0 + 1e-9));
    }

    fn setup(gamma_sd: f64, r_sd: f64) -> ThreePulseSetup {
        ThreePulseSetup {
            t12: 60e-6,
            amplitudes: PopulationAmplitudes::default(),
            lifetimes: PopulationLifetimes::new(1.99e-3, 55.14e-3, 30.0).unwrap(),
            diffusion: SpectralDiffusionParams::new(300.0, 0.0, gamma_sd, r_sd, 160e-6).unwrap(),
            i0: 1.0,
        }
    }

    fn opts(s: &ThreePulseSetup) -> ThreePulseOptions {
        ThreePulseOptions { freeze_tls: true, ..ThreePulseOptions::new(s.lifetimes) }
    }

    #[test]
    fn noiseless_three_pulse_round_trip() {
        let s = setup(5.82e3, 200.0);
        let curve = synthesize_3ppe(&s, &log_grid(160e-6, 0.1, 40), Noise::None, 0).unwrap();
        let fit = fit_3ppe_spectral_diffusion(&[curve], &opts(&s), Exec::Sequential).unwrap();
        let r = &fit.result;
        assert!((r.value("gamma_sd") / 5.82e3 - 1.0).abs() < 1e-4, "{}", r.value("gamma_sd"));
        assert!((r.value("r_sd") / 200.0 - 1.0).abs() < 1e-4, "{}", r.value("r_sd"));
        assert!(r.uncertainty("gamma0").is_infinite());
    }

    #[test]
    fn known_scale_pins_gamma0() {
        let s = setup(4.84e3, 220.0);
        let curve = synthesize_3ppe(&s, &log_grid(160e-6, 0.1, 40), Noise::None, 0).unwrap();
        let o = ThreePulseOptions {
            i0: Some(1.0),
            amplitudes: AmplitudeMode::Fixed(s.amplitudes),
            ..opts(&s)
        };
        let fit = fit_3ppe_spectral_diffusion(&[curve], &o, Exec::Sequential).unwrap();
        assert!((fit.result.value("gamma0") / 300.0 - 1.0).abs() < 1e-6);
        assert!(fit.result.uncertainty("gamma0").is_finite());
    }

    #[test]
    fn short_span_is_not_identifiable() {
        let s = setup(5.82e3, 200.0);
        let curve = synthesize_3ppe(&s, &log_grid(1e-3, 5e-2, 20), Noise::None, 0).unwrap();
        let err = fit_3ppe_spectral_diffusion(&[curve], &opts(&s), Exec::Sequential).unwrap_err();
        assert!(matches!(err, Error::Identifiability("gamma_sd, r_sd", _)));
    }

    #[test]
    fn uncertainty_shrinks_with_span() {
        let s = setup(5.82e3, 200.0);
        let grid = log_grid(160e-6, 0.1, 60);
        let mut last = f64::INFINITY;
        for end in [45, 52, 60] {
            let curve = synthesize_3ppe(&s, &grid[..end], Noise::None, 0).unwrap();
            let o = ThreePulseOptions {
                noise_sigma: Some(0.01),
                amplitudes: AmplitudeMode::Fixed(s.amplitudes),
                ..opts(&s)
            };
            let fit = fit_3ppe_spectral_diffusion(&[curve], &o, Exec::Sequential).unwrap();
            let sigma = fit.result.uncertainty("gamma_sd");
            assert!(sigma < last, "{sigma} !< {last}");
            last = sigma;
        }
    }

    #[test]
    fn null_diffusion_is_consistent_with_zero() {
        let s = setup(0.0, 200.0);
        let curve = synthesize_3ppe(&s, &log_grid(160e-6, 0.1, 40), Noise::Relative(0.01), 8).unwrap();
        let o = ThreePulseOptions { amplitudes: AmplitudeMode::Fixed(s.amplitudes), ..opts(&s) };
        let fit = fit_3ppe_spectral_diffusion(&[curve], &o, Exec::Sequential).unwrap();
        let r = &fit.result;
        assert!(r.value("gamma_sd") <= 3.0 * r.uncertainty("gamma_sd"), "{} ± {}", r.value("gamma_sd"), r.uncertainty("gamma_sd"));
    }
}
