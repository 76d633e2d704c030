//! Self-check suite run by `reqm-sim verify`: conservation, causality,
//! passivity, optimizer-versus-oracle and reproducibility.

use crate::afc::{build_comb, propagate_field, transfer_function, CombSpec, Envelope, PulseTrainSpec, ToothShape};
use crate::coherence::{synthesize_2ppe, synthesize_3ppe, ThreePulseSetup};
use crate::error::Result;
use crate::exec::Exec;
use crate::fitting::{
    fit_3ppe_spectral_diffusion, fit_hole_width, fit_multiexponential, fit_two_pulse, grid_oracle,
    AmplitudeMode, FitProblem, HoleWidthOptions, MultiExpOptions, ThreePulseOptions,
};
use crate::io::trace_csv::{format_trace, TraceMeta};
use crate::model::{PopulationAmplitudes, PopulationLifetimes, SpectralDiffusionParams};
use crate::noise::Noise;
use crate::population::{
    cascade_evolve, linear_grid, log_grid, synthesize_shb_decay, CascadeRates, CascadeState,
    ExponentialMixture,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn run_suite(exec: Exec) -> Vec<Check> {
    vec![
        check("population conservation", || {
            let rates = CascadeRates::new(1.99e-3, 55.14e-3, 30.0, 0.7)?;
            let mut worst: f64 = 0.0;
            for t in log_grid(1e-7, 1e3, 60) {
                let s = cascade_evolve(&CascadeState::all_excited(), t, &rates)?;
                worst = worst.max((s.total() - 1.0).abs());
            }
            Ok((worst <= 1e-9, format!("max |N - 1| = {worst:.2e}")))
        }),
        check("transfer causality", || {
            let spec = CombSpec::new(200e3, 2.0, 1.0, 0.2, 10e6, 0.0, ToothShape::Gaussian)?;
            let acausal = transfer_function(&build_comb(&spec, spec.tooth_fwhm() / 10.0)?)?
                .impulse_response()
                .acausal_fraction();
            Ok((acausal < 1e-6, format!("acausal energy fraction = {acausal:.2e}")))
        }),
        check("passive energy bound", || {
            let spec = CombSpec::new(200e3, 3.0, 2.0, 0.1, 10e6, 0.0, ToothShape::Gaussian)?;
            let profile = build_comb(&spec, spec.tooth_fwhm() / 10.0)?;
            let train = PulseTrainSpec::periodic(0.5e-6, 200e-9, 300e-9, &[1.0; 5], Envelope::Square)?;
            let p = propagate_field(&train, &profile, 20e-6, 10e-9)?;
            let ratio = p.output_energy() / p.input_energy();
            Ok((ratio <= 1.0, format!("E_out / E_in = {ratio:.4}")))
        }),
        check("optimizer <= oracle (2PPE)", || {
            let curve = synthesize_2ppe(1.0 / (std::f64::consts::PI * 1.1e-3), 1.0, &linear_grid(0.0, 2.2e-3, 20), Noise::Relative(0.02), 1)?;
            let fit = fit_two_pulse(&curve)?;
            let oracle = grid_oracle(&FitProblem::two_pulse(&curve)?, 200, exec)?;
            Ok((fit.rss <= oracle.rss, format!("{:.3e} vs {:.3e}", fit.rss, oracle.rss)))
        }),
        check("optimizer <= oracle (SHB)", || {
            let mix = ExponentialMixture::from_pairs(&[(0.5, 1.99e-3), (0.5, 55.14e-3)], 0.0)?;
            let trace = synthesize_shb_decay(&mix, &log_grid(10e-6, 0.3, 50), Noise::Absolute(0.01), 1)?;
            let opts = MultiExpOptions::default();
            let fit = fit_multiexponential(&trace, &opts, exec)?;
            let oracle = grid_oracle(&FitProblem::multiexponential(&trace, &opts)?, 20, exec)?;
            Ok((fit.rss <= oracle.rss, format!("{:.3e} vs {:.3e}", fit.rss, oracle.rss)))
        }),
        check("optimizer <= oracle (hole width)", || {
            let p = SpectralDiffusionParams::new(20e3, 0.0, 70e3, 0.01, 1.0)?;
            let trace = crate::coherence::synthesize_hole_widths(&p, &linear_grid(0.0, 500.0, 26), Noise::Relative(0.01), 1)?;
            let fit = fit_hole_width(&trace, &HoleWidthOptions::default(), exec)?;
            let oracle = grid_oracle(&FitProblem::hole_width(&trace)?, 100, exec)?;
            Ok((fit.rss <= oracle.rss, format!("{:.3e} vs {:.3e}", fit.rss, oracle.rss)))
        }),
        check("optimizer <= oracle (3PPE)", || {
            let setup = ThreePulseSetup {
                t12: 60e-6,
                amplitudes: PopulationAmplitudes::default(),
                lifetimes: PopulationLifetimes::new(1.99e-3, 55.14e-3, 30.0)?,
                diffusion: SpectralDiffusionParams::new(300.0, 0.0, 5.82e3, 200.0, 160e-6)?,
                i0: 1.0,
            };
            let curve = synthesize_3ppe(&setup, &log_grid(160e-6, 0.1, 40), Noise::Relative(0.01), 1)?;
            let opts = ThreePulseOptions {
                amplitudes: AmplitudeMode::Fixed(setup.amplitudes),
                freeze_tls: true,
                ..ThreePulseOptions::new(setup.lifetimes)
            };
            let fit = fit_3ppe_spectral_diffusion(&[curve], &opts, exec)?;
            let oracle = grid_oracle(&fit.problem, 100, exec)?;
            Ok((fit.result.rss <= oracle.rss, format!("{:.3e} vs {:.3e}", fit.result.rss, oracle.rss)))
        }),
        check("seeded reruns identical", || {
            let mix = ExponentialMixture::from_pairs(&[(0.5, 1.99e-3), (0.5, 55.14e-3)], 0.0)?;
            let grid = log_grid(10e-6, 0.3, 50);
            let meta = TraceMeta { seed: Some(42), ..Default::default() };
            let a = format_trace(&synthesize_shb_decay(&mix, &grid, Noise::Absolute(0.01), 42)?, &meta);
            let b = format_trace(&synthesize_shb_decay(&mix, &grid, Noise::Absolute(0.01), 42)?, &meta);
            Ok((a == b, format!("{} bytes", a.len())))
        }),
        check("sequential == parallel fit", || {
            let mix = ExponentialMixture::from_pairs(&[(0.5, 1.99e-3), (0.5, 55.14e-3)], 0.0)?;
            let trace = synthesize_shb_decay(&mix, &log_grid(10e-6, 0.3, 50), Noise::Absolute(0.01), 2)?;
            let opts = MultiExpOptions::default();
            let a = fit_multiexponential(&trace, &opts, Exec::Sequential)?;
            let b = fit_multiexponential(&trace, &opts, Exec::Parallel)?;
            Ok((a == b, format!("rss {:.6e}", a.rss)))
        }),
    ]
}

/// Plain-text table, one line per check.
pub fn format_table(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        out.push_str(&format!("{status}  {:width$}  {}\n", c.name, c.detail));
    }
    out
}
