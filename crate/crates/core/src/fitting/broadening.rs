//! Persistent-hole broadening: width versus burn-to-read delay, per field.

use serde::{Deserialize, Serialize};

use super::lm::{linear_lstsq, LmConfig, ParamSpec};
use super::{grid_knot, min_spacing, solve, FitProblem, FitResult, Model, Space};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::trace::{TimeTrace, TraceKind};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HoleWidthOptions {
    pub noise_sigma: Option<f64>,
    /// Accept series shorter than three diffusion times without a warning.
    pub short_series: bool,
    pub lm: LmConfig,
}

impl FitProblem {
    /// 2Γ₀ + Γ_SD(1 − e^{−R_SD t}) on the widths themselves.
    pub fn hole_width(trace: &TimeTrace) -> Result<FitProblem> {
        if !matches!(trace.kind(), TraceKind::Linewidth | TraceKind::Signal) {
            return Err(Error::invalid("trace", "expected hole widths versus time"));
        }
        let t = trace.times();
        let y = trace.samples().to_vec();
        if t[0] < 0.0 {
            return Err(Error::invalid("trace", "times must be >= 0"));
        }
        let t_max = t[t.len() - 1];
        let y_max = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !(t_max > 0.0 && y_max > 0.0) {
            return Err(Error::invalid("trace", "needs positive times and non-zero widths"));
        }
        let params = vec![
            ParamSpec::new("width0", "Hz", 0.0, 2.0 * y_max, false),
            ParamSpec::new("gamma_sd", "Hz", 0.0, 10.0 * y_max, false),
            ParamSpec::new("r_sd", "Hz", 0.1 / t_max, 10.0 / min_spacing(&t), true),
        ];
        let mut problem = FitProblem::new(Model::HoleWidth, t, y, Space::Linear, params)?;
        problem.guesses = projected_starts(&problem);
        Ok(problem)
    }
}

/// Exact linear solve for (2Γ₀, Γ_SD) at rates spread over the bounds.
fn projected_starts(problem: &FitProblem) -> Vec<Vec<f64>> {
    let r_spec = &problem.params[2];
    (0..8)
        .filter_map(|k| {
            let r = grid_knot(r_spec, k, 8);
            let cols = vec![
                vec![1.0; problem.x.len()],
                problem.x.iter().map(|t| -(-r * t).exp_m1()).collect(),
            ];
            let c = linear_lstsq(&cols, &problem.y)?;
            let p = &problem.params;
            Some(vec![c[0].clamp(p[0].lo, p[0].hi), c[1].clamp(p[1].lo, p[1].hi), r])
        })
        .collect()
}

/// Fits one width series; reports Γ₀ (half the initial width) alongside the
/// raw parameters.
pub fn fit_hole_width(trace: &TimeTrace, opts: &HoleWidthOptions, exec: Exec) -> Result<FitResult> {
    let mut problem = FitProblem::hole_width(trace)?;
    problem.noise_sigma = opts.noise_sigma;
    let raw = solve(&problem, &opts.lm, exec)?;
    let mut out = FitResult {
        model: problem.model.name().to_string(),
        estimates: Vec::new(),
        rss: raw.rss,
        iterations: raw.iterations,
        converged: raw.converged,
        dropped_points: 0,
        warnings: Vec::new(),
    };
    for (i, p) in problem.params.iter().enumerate() {
        out.push(&p.name, raw.x[i], raw.sigma[i], &p.unit);
    }
    out.push("gamma0", raw.x[0] / 2.0, raw.sigma[0] / 2.0, "Hz");

    let t_max = problem.x[problem.x.len() - 1];
    if raw.x[2] * t_max < 3.0 && !opts.short_series {
        out.warnings.push(format!(
            "series covers {:.2} diffusion times; the asymptote and gamma_sd are poorly constrained",
            raw.x[2] * t_max
        ));
    }
    if !out.converged {
        out.warnings.push("optimizer did not converge from any start".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleBroadeningFit {
    /// Tesla.
    pub fields: Vec<f64>,
    pub per_field: Vec<FitResult>,
    pub gamma_sd: Vec<f64>,
    pub gamma_sd_sigma: Vec<f64>,
    pub r_sd: Vec<f64>,
    pub r_sd_sigma: Vec<f64>,
}

impl HoleBroadeningFit {
    /// Sample standard deviation over mean of R_SD across fields.
    pub fn r_sd_variation(&self) -> f64 {
        let n = self.r_sd.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.r_sd.iter().sum::<f64>() / n;
        let var = self.r_sd.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / mean
    }
}

/// Fits every field's width series; fields run through `exec`, each fit
/// itself sequentially.
pub fn fit_hole_broadening(
    widths: &[TimeTrace],
    fields: &[f64],
    opts: &HoleWidthOptions,
    exec: Exec,
) -> Result<HoleBroadeningFit> {
    if widths.len() != fields.len() {
        return Err(Error::invalid("fields", "one field per width series"));
    }
    if widths.is_empty() {
        return Err(Error::invalid("widths", "need at least one series"));
    }
    let per_field = exec
        .map_slice(widths, |w| fit_hole_width(w, opts, Exec::Sequential))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let series = |name: &str| -> (Vec<f64>, Vec<f64>) {
        per_field.iter().map(|f| (f.value(name), f.uncertainty(name))).unzip()
    };
    let (gamma_sd, gamma_sd_sigma) = series("gamma_sd");
    let (r_sd, r_sd_sigma) = series("r_sd");
    Ok(HoleBroadeningFit {
        fields: fields.to_vec(),
        per_field,
        gamma_sd,
        gamma_sd_sigma,
        r_sd,
        r_sd_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::synthesize_hole_widths;
    use crate::fitting::grid_oracle;
    use crate::model::SpectralDiffusionParams;
    use crate::noise::Noise;
    use crate::population::linear_grid;

    fn series(gamma_sd: f64, noise: Noise, seed: u64) -> TimeTrace {
        let p = SpectralDiffusionParams::new(20e3, 0.0, gamma_sd, 0.01, 1e-6).unwrap();
        synthesize_hole_widths(&p, &linear_grid(0.0, 500.0, 26), noise, seed).unwrap()
    }

    #[test]
    fn noiseless_series_is_exact() {
        let r = fit_hole_width(&series(70e3, Noise::None, 0), &HoleWidthOptions::default(), Exec::Sequential).unwrap();
        assert!((r.value("gamma_sd") / 70e3 - 1.0).abs() < 1e-6);
        assert!((r.value("r_sd") / 0.01 - 1.0).abs() < 1e-6);
        assert!((r.value("gamma0") / 20e3 - 1.0).abs() < 1e-6);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn constant_width_gives_no_broadening() {
        let r = fit_hole_width(&series(0.0, Noise::Relative(0.01), 2), &HoleWidthOptions::default(), Exec::Sequential).unwrap();
        let (v, s) = (r.value("gamma_sd"), r.uncertainty("gamma_sd"));
        assert!(v <= 3.0 * s, "{v} ± {s}");
    }

    #[test]
    fn short_series_is_flagged() {
        let p = SpectralDiffusionParams::new(20e3, 0.0, 70e3, 0.01, 1e-6).unwrap();
        let tr = synthesize_hole_widths(&p, &linear_grid(0.0, 100.0, 26), Noise::None, 0).unwrap();
        let r = fit_hole_width(&tr, &HoleWidthOptions::default(), Exec::Sequential).unwrap();
        assert!(!r.warnings.is_empty());
        let quiet = HoleWidthOptions { short_series: true, ..Default::default() };
        assert!(fit_hole_width(&tr, &quiet, Exec::Sequential).unwrap().warnings.is_empty());
    }

    #[test]
    fn optimizer_beats_grid_oracle() {
        let tr = series(50e3, Noise::Relative(0.01), 6);
        let r = fit_hole_width(&tr, &HoleWidthOptions::default(), Exec::Sequential).unwrap();
        let oracle = grid_oracle(&FitProblem::hole_width(&tr).unwrap(), 100, Exec::Parallel).unwrap();
        assert!(r.rss <= oracle.rss * (1.0 + 1e-12));
    }

    #[test]
    fn broadening_series_across_fields() {
        let fields = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let truth: Vec<f64> = (0..6).map(|i| 36e3 + (105e3 - 36e3) * i as f64 / 5.0).collect();
        let traces: Vec<TimeTrace> = truth
            .iter()
            .enumerate()
            .map(|(i, &g)| series(g, Noise::Relative(0.01), 100 + i as u64))
            .collect();
        let fit = fit_hole_broadening(&traces, &fields, &HoleWidthOptions::default(), Exec::Parallel).unwrap();
        for (g, t) in fit.gamma_sd.iter().zip(&truth) {
            assert!((g / t - 1.0).abs() < 0.1, "{g} vs {t}");
        }
        assert!(fit.r_sd_variation() < 0.2);
        let seq = fit_hole_broadening(&traces, &fields, &HoleWidthOptions::default(), Exec::Sequential).unwrap();
        assert_eq!(fit, seq);
    }

    #[test]
    fn mismatched_fields_rejected() {
        let tr = series(50e3, Noise::None, 0);
        assert!(fit_hole_broadening(&[tr], &[0.1, 0.2], &HoleWidthOptions::default(), Exec::Sequential).is_err());
    }
}
