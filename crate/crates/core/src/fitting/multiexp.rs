//! Sums of exponentials, e.g. persistent-hole area decay.

use super::lm::{LmConfig, ParamSpec};
use super::{min_spacing, solve, FitProblem, FitResult, Model, Space};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::trace::{TimeTrace, TraceKind};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiExpOptions {
    pub components: usize,
    pub offset: bool,
    /// Overrides the data-derived box, in the model's parameter order.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub noise_sigma: Option<f64>,
    pub lm: LmConfig,
}

impl Default for MultiExpOptions {
    fn default() -> Self {
        MultiExpOptions {
            components: 2,
            offset: false,
            bounds: None,
            noise_sigma: None,
            lm: LmConfig::default(),
        }
    }
}

impl FitProblem {
    /// Least squares on log-data for strictly positive intensity traces,
    /// on the data itself otherwise.
    pub fn multiexponential(trace: &TimeTrace, opts: &MultiExpOptions) -> Result<FitProblem> {
        let n = opts.components;
        if !(1..=3).contains(&n) {
            return Err(Error::invalid("components", "must be 1, 2 or 3"));
        }
        if trace.kind() == TraceKind::FieldEnvelope {
            return Err(Error::invalid("trace", "expected a real-valued decay"));
        }
        let t = trace.times();
        let y = trace.samples().to_vec();
        let free = 2 * n + usize::from(opts.offset);
        if free >= y.len() {
            return Err(Error::invalid(
                "trace",
                format!("{} points cannot determine {free} parameters", y.len()),
            ));
        }
        let t_max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(t_max > 0.0) {
            return Err(Error::invalid("trace", "needs positive times"));
        }
        let y_max = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !(y_max > 0.0) {
            return Err(Error::invalid("trace", "all samples are zero"));
        }
        let t_pos = t.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
        let tau_lo = 0.1 * min_spacing(&t).min(t_pos);
        let tau_hi = 10.0 * t_max;
        let unit = trace.kind().value_unit();

        let mut params = Vec::with_capacity(free);
        for k in 1..=n {
            params.push(ParamSpec::new(&format!("amplitude_{k}"), unit, 0.0, 10.0 * y_max, false));
            params.push(ParamSpec::new(&format!("lifetime_{k}"), "s", tau_lo, tau_hi, true));
        }
        if opts.offset {
            params.push(ParamSpec::new("offset", unit, -y_max, y_max, false));
        }
        if let Some(b) = &opts.bounds {
            if b.len() != params.len() {
                return Err(Error::invalid("bounds", format!("expected {} pairs", params.len())));
            }
            for (p, &(lo, hi)) in params.iter_mut().zip(b) {
                p.lo = lo;
                p.hi = hi;
            }
        }

        let space = if trace.kind() == TraceKind::Intensity && y.iter().all(|v| *v > 0.0) {
            Space::Log
        } else {
            Space::Linear
        };
        let mut problem = FitProblem::new(
            Model::MultiExponential { components: n, offset: opts.offset },
            t,
            y,
            space,
            params,
        )?;
        // lifetimes spread geometrically over the sampled range, amplitudes shared
        let (a, b) = (t_pos.max(tau_lo).ln(), t_max.ln());
        let mut guess = Vec::with_capacity(free);
        for k in 0..n {
            guess.push(y_max / n as f64);
            guess.push((a + (k as f64 + 0.5) / n as f64 * (b - a)).exp());
        }
        if opts.offset {
            guess.push(0.0);
        }
        for (g, p) in guess.iter_mut().zip(&problem.params) {
            *g = g.clamp(p.lo, p.hi);
        }
        problem.guesses = vec![guess];
        problem.noise_sigma = opts.noise_sigma;
        Ok(problem)
    }
}

/// Fits a 1–3 component exponential mixture; lifetimes come back sorted
/// ascending with their amplitudes.
pub fn fit_multiexponential(trace: &TimeTrace, opts: &MultiExpOptions, exec: Exec) -> Result<FitResult> {
    let problem = FitProblem::multiexponential(trace, opts)?;
    let raw = solve(&problem, &opts.lm, exec)?;
    let n = opts.components;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw.x[2 * i + 1].total_cmp(&raw.x[2 * j + 1]).then(i.cmp(&j)));

    let mut out = FitResult {
        model: problem.model.name().to_string(),
        estimates: Vec::new(),
        rss: raw.rss,
        iterations: raw.iterations,
        converged: raw.converged,
        dropped_points: 0,
        warnings: Vec::new(),
    };
    let unit = trace.kind().value_unit();
    for (rank, &k) in order.iter().enumerate() {
        out.push(&format!("amplitude_{}", rank + 1), raw.x[2 * k], raw.sigma[2 * k], unit);
        out.push(&format!("lifetime_{}", rank + 1), raw.x[2 * k + 1], raw.sigma[2 * k + 1], "s");
    }
    if opts.offset {
        out.push("offset", raw.x[2 * n], raw.sigma[2 * n], unit);
    }
    if !out.converged {
        out.warnings.push("optimizer did not converge from any start".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::grid_oracle;
    use crate::noise::Noise;
    use crate::population::{log_grid, synthesize_shb_decay, ExponentialMixture};
    use proptest::prelude::*;

    fn exact(pairs: &[(f64, f64)], grid: &[f64]) -> TimeTrace {
        let mix = ExponentialMixture::from_pairs(pairs, 0.0).unwrap();
        synthesize_shb_decay(&mix, grid, Noise::None, 0).unwrap()
    }

    fn single() -> MultiExpOptions {
        MultiExpOptions { components: 1, ..Default::default() }
    }

    #[test]
    fn single_exponential_recovered_exactly() {
        let trace = exact(&[(1.0, 1e-3)], &log_grid(1e-5, 1e-2, 40));
        let r = fit_multiexponential(&trace, &single(), Exec::Sequential).unwrap();
        assert!(r.converged);
        assert!((r.value("amplitude_1") - 1.0).abs() < 1e-6);
        assert!((r.value("lifetime_1") / 1e-3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lifetimes_sorted_ascending() {
        let trace = exact(&[(0.3, 50e-3), (0.7, 2e-3)], &log_grid(1e-5, 0.3, 50));
        let r = fit_multiexponential(&trace, &MultiExpOptions::default(), Exec::Sequential).unwrap();
        assert!(r.value("lifetime_1") < r.value("lifetime_2"));
        assert!((r.value("amplitude_1") - 0.7).abs() < 1e-6);
        assert!((r.value("lifetime_2") / 50e-3 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_double_exponential_round_trip() {
        let mix = ExponentialMixture::from_pairs(&[(0.5, 1.99e-3), (0.5, 55.14e-3)], 0.0).unwrap();
        let trace = synthesize_shb_decay(&mix, &log_grid(1e-5, 0.3, 50), Noise::Absolute(0.01), 3).unwrap();
        let r = fit_multiexponential(&trace, &MultiExpOptions::default(), Exec::Sequential).unwrap();
        assert!((r.value("lifetime_1") / 1.99e-3 - 1.0).abs() < 0.05);
        assert!((r.value("lifetime_2") / 55.14e-3 - 1.0).abs() < 0.05);
        assert!(r.uncertainty("lifetime_1") > 0.0 && r.uncertainty("lifetime_1").is_finite());
    }

    #[test]
    fn optimizer_beats_grid_oracle() {
        let mix = ExponentialMixture::from_pairs(&[(0.5, 1.99e-3), (0.5, 55.14e-3)], 0.0).unwrap();
        let trace = synthesize_shb_decay(&mix, &log_grid(1e-5, 0.3, 50), Noise::Absolute(0.01), 9).unwrap();
        let opts = MultiExpOptions::default();
        let r = fit_multiexponential(&trace, &opts, Exec::Parallel).unwrap();
        let oracle = grid_oracle(&FitProblem::multiexponential(&trace, &opts).unwrap(), 20, Exec::Parallel).unwrap();
        assert!(r.rss <= oracle.rss, "{} > {}", r.rss, oracle.rss);
    }

    #[test]
    fn too_few_points_rejected() {
        let trace = exact(&[(1.0, 1e-3)], &[1e-4, 2e-4, 3e-4, 4e-4]);
        assert!(fit_multiexponential(&trace, &MultiExpOptions::default(), Exec::Sequential).is_err());
        let opts = MultiExpOptions { components: 4, ..Default::default() };
        assert!(fit_multiexponential(&trace, &opts, Exec::Sequential).is_err());
    }

    #[test]
    fn deterministic_bit_for_bit() {
        let mix = ExponentialMixture::from_pairs(&[(0.5, 1.99e-3), (0.5, 55.14e-3)], 0.0).unwrap();
        let trace = synthesize_shb_decay(&mix, &log_grid(1e-5, 0.3, 50), Noise::Absolute(0.01), 4).unwrap();
        let opts = MultiExpOptions::default();
        let a = fit_multiexponential(&trace, &opts, Exec::Parallel).unwrap();
        let b = fit_multiexponential(&trace, &opts, Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scale_equivariance(c in 1e-3f64..1e3, tau in 1e-4f64..1e-1) {
            let trace = exact(&[(0.6, tau), (0.4, 20.0 * tau)], &log_grid(tau / 100.0, 100.0 * tau, 40));
            let opts = MultiExpOptions::default();
            let a = fit_multiexponential(&trace, &opts, Exec::Sequential).unwrap();
            let b = fit_multiexponential(&trace.scaled(c).unwrap(), &opts, Exec::Sequential).unwrap();
            for k in ["lifetime_1", "lifetime_2"] {
                prop_assert!((b.value(k) / a.value(k) - 1.0).abs() < 1e-9);
            }
            for k in ["amplitude_1", "amplitude_2"] {
                prop_assert!((b.value(k) / (c * a.value(k)) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn time_unit_equivariance(tau in 1e-4f64..1e-1) {
            // the same decay recorded in milliseconds and in seconds
            let grid = log_grid(tau / 100.0, 100.0 * tau, 40);
            let seconds = exact(&[(0.6, tau), (0.4, 20.0 * tau)], &grid);
            let millis = seconds.rescaled_axis(1e3).unwrap();
            let opts = MultiExpOptions::default();
            let a = fit_multiexponential(&seconds, &opts, Exec::Sequential).unwrap();
            let b = fit_multiexponential(&millis, &opts, Exec::Sequential).unwrap();
            for k in ["lifetime_1", "lifetime_2"] {
                prop_assert!((b.value(k) / (1e3 * a.value(k)) - 1.0).abs() < 1e-9);
            }
            for k in ["amplitude_1", "amplitude_2"] {
                prop_assert!((b.value(k) / a.value(k) - 1.0).abs() < 1e-9);
            }
        }
    }
}
