//! Turns a parsed config into traces, fits, quantities and plot series.
//! Nothing here touches the filesystem except reading a `fit` input trace.

use std::path::Path;

use crate::afc::{
    analytic_efficiency, build_comb, build_composite, dephasing_factor, dicke_echo_amplitude,
    propagate_field, simulate_spectral_multimode, Channel, CombSpec, DickeEnsemble,
    MultimodeSettings, PulseTrainSpec,
};
use crate::coherence::{synthesize_2ppe, synthesize_3ppe, synthesize_hole_widths, EchoAxis, EchoDecayCurve};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fitting::{
    fit_3ppe_spectral_diffusion, fit_hole_broadening, fit_hole_width, fit_multiexponential,
    fit_two_pulse, AmplitudeMode, HoleWidthOptions, MultiExpOptions, ThreePulseOptions,
};
use crate::io::config::{
    AfcSpectralConfig, AfcTemporalConfig, BroadeningConfig, Experiment, ExperimentConfig,
    FitConfig, FitModelKind, PulseConfig, ShbConfig, ThreePulseConfig, TwoPulseConfig,
};
use crate::io::plotdata::{self, PlotFile};
use crate::io::result::ResultDocument;
use crate::io::trace_csv::read_trace;
use crate::model::SpectralDiffusionParams;
use crate::population::{synthesize_shb_decay, ExponentialMixture};
use crate::trace::{TimeTrace, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Fit,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Fit => "fit",
        }
    }
}

/// A named trace to be written as `<prefix>_<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTrace {
    pub name: String,
    pub trace: TimeTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub document: ResultDocument,
    pub traces: Vec<NamedTrace>,
    pub plots: Vec<PlotFile>,
}

impl RunOutput {
    fn push_trace(&mut self, name: &str, trace: TimeTrace) {
        self.traces.push(NamedTrace { name: name.into(), trace });
    }
}

fn curve_trace(curve: &EchoDecayCurve) -> Result<TimeTrace> {
    TimeTrace::sampled(TraceKind::Intensity, curve.grid.clone(), curve.intensities.clone())
}

fn train(p: &PulseConfig) -> Result<PulseTrainSpec> {
    if p.count == 1 {
        PulseTrainSpec::single(p.first, p.duration, p.envelope)
    } else {
        PulseTrainSpec::periodic(p.first, p.duration, p.period, &vec![1.0; p.count], p.envelope)
    }
}

/// Runs `config`; `base_dir` resolves relative input paths.
pub fn run(config: &ExperimentConfig, mode: Mode, base_dir: &Path, exec: Exec) -> Result<RunOutput> {
    let mut out = RunOutput {
        document: ResultDocument::new(mode.name(), config),
        traces: Vec::new(),
        plots: Vec::new(),
    };
    let grid = config.grid.map(|g| g.values()).unwrap_or_default();
    let fit = mode == Mode::Fit;
    match &config.experiment {
        Experiment::ShbDecay(c) => shb(config, c, &grid, fit, exec, &mut out)?,
        Experiment::TwoPulse(c) => two_pulse(config, c, &grid, fit, &mut out)?,
        Experiment::ThreePulse(c) => three_pulse(config, c, &grid, fit, exec, &mut out)?,
        Experiment::HoleBroadening(c) => broadening(config, c, &grid, fit, exec, &mut out)?,
        Experiment::AfcTemporal(c) => {
            no_fit(config, fit)?;
            afc_temporal(config, c, &mut out)?
        }
        Experiment::AfcSpectral(c) => {
            no_fit(config, fit)?;
            afc_spectral(c, exec, &mut out)?
        }
        Experiment::Fit(c) => {
            if !fit {
                return Err(Error::invalid("kind", "`fit` configs run with the fit subcommand"));
            }
            fit_file(c, base_dir, exec, &mut out)?
        }
    }
    Ok(out)
}

fn no_fit(config: &ExperimentConfig, fit: bool) -> Result<()> {
    if fit {
        return Err(Error::invalid("kind", format!("{} runs have nothing to fit; use simulate", config.kind.name())));
    }
    Ok(())
}

fn shb(config: &ExperimentConfig, c: &ShbConfig, grid: &[f64], fit: bool, exec: Exec, out: &mut RunOutput) -> Result<()> {
    let mix = ExponentialMixture::shb(&config.material, &c.amplitudes, c.zeeman_lifetime)?;
    let trace = synthesize_shb_decay(&mix, grid, config.noise(), config.seed_or_zero())?;
    for (k, comp) in mix.components().iter().enumerate() {
        out.document.quantity(&format!("amplitude_{}", k + 1), comp.amplitude, "arb");
        out.document.quantity(&format!("lifetime_{}", k + 1), comp.lifetime, "s");
    }
    if fit {
        let opts = MultiExpOptions { components: c.components, ..Default::default() };
        let r = fit_multiexponential(&trace, &opts, exec)?;
        out.plots.extend(plotdata::hole_decay(&trace, &r));
        out.document.add_fit(r);
    }
    out.push_trace("hole_area", trace);
    Ok(())
}

fn two_pulse(config: &ExperimentConfig, c: &TwoPulseConfig, grid: &[f64], fit: bool, out: &mut RunOutput) -> Result<()> {
    let curve = synthesize_2ppe(c.gamma_h, c.i0, grid, config.noise(), config.seed_or_zero())?;
    out.document.quantity("gamma_h", c.gamma_h, "Hz");
    out.document.quantity("t2", 1.0 / (std::f64::consts::PI * c.gamma_h), "s");
    if fit {
        let r = fit_two_pulse(&curve)?;
        out.plots.extend(plotdata::two_pulse_decay(&curve.grid, &curve.intensities, &r));
        out.plots.push(plotdata::t2_vs_field(&[config.field.b_field], std::slice::from_ref(&r)));
        out.document.add_fit(r);
    }
    out.push_trace("echo_2ppe", curve_trace(&curve)?);
    Ok(())
}

fn three_pulse(
    config: &ExperimentConfig,
    c: &ThreePulseConfig,
    grid: &[f64],
    fit: bool,
    exec: Exec,
    out: &mut RunOutput,
) -> Result<()> {
    let curve = synthesize_3ppe(&c.setup, grid, config.noise(), config.seed_or_zero())?;
    let d = &c.setup.diffusion;
    out.document.quantity("gamma_sd", d.gamma_sd, "Hz");
    out.document.quantity("r_sd", d.r_sd, "Hz");
    let gamma_eff: Vec<f64> = grid
        .iter()
        .map(|&t| crate::coherence::effective_linewidth(c.setup.t12, t, d))
        .collect::<Result<_>>()?;
    if fit {
        let opts = ThreePulseOptions {
            amplitudes: if c.float_amplitudes { AmplitudeMode::Floated } else { AmplitudeMode::Fixed(c.setup.amplitudes) },
            i0: c.known_i0.then_some(c.setup.i0),
            freeze_tls: c.freeze_tls,
            t0: Some(d.t0),
            ..ThreePulseOptions::new(c.setup.lifetimes)
        };
        let r = fit_3ppe_spectral_diffusion(std::slice::from_ref(&curve), &opts, exec)?;
        out.plots.extend(plotdata::effective_linewidth(&r));
        if let Some(a) = r.amplitude_fit.clone() {
            out.document.fits.push(a);
        }
        out.document.add_fit(r.result);
    }
    out.push_trace("echo_3ppe", curve_trace(&curve)?);
    out.push_trace("gamma_eff", TimeTrace::sampled(TraceKind::Linewidth, grid.to_vec(), gamma_eff)?);
    Ok(())
}

/// Field `i` draws its noise from `seed + i`.
fn broadening(
    config: &ExperimentConfig,
    c: &BroadeningConfig,
    grid: &[f64],
    fit: bool,
    exec: Exec,
    out: &mut RunOutput,
) -> Result<()> {
    let mut widths = Vec::with_capacity(c.fields.len());
    for (i, &g) in c.gamma_sd.iter().enumerate() {
        let p = SpectralDiffusionParams::new(c.gamma0, 0.0, g, c.r_sd, 1.0)?;
        let seed = config.seed_or_zero().wrapping_add(i as u64);
        widths.push(synthesize_hole_widths(&p, grid, config.noise(), seed)?);
    }
    if fit {
        let r = fit_hole_broadening(&widths, &c.fields, &HoleWidthOptions::default(), exec)?;
        out.plots.extend(plotdata::hole_broadening(&widths, &r));
        out.document.quantity("r_sd_variation", r.r_sd_variation(), "1");
        for f in r.per_field {
            out.document.add_fit(f);
        }
    }
    for (w, b) in widths.into_iter().zip(&c.fields) {
        out.push_trace(&format!("hole_width_{}mT", (b * 1e3).round()), w);
    }
    Ok(())
}

fn afc_temporal(config: &ExperimentConfig, c: &AfcTemporalConfig, out: &mut RunOutput) -> Result<()> {
    let profile = build_comb(&c.comb, c.resolution)?;
    let train = train(&c.pulse)?;
    let p = propagate_field(&train, &profile, c.window, c.dt)?;
    let storage = c.comb.storage_time();
    let first = train.pulses()[0].t_center;
    // Echo metrics need an isolated pulse; a train's later pulses would sit
    // inside the first pulse's echo gate.
    let single = if c.pulse.count == 1 {
        p.clone()
    } else {
        let lone = PulseTrainSpec::single(first, c.pulse.duration, c.pulse.envelope)?;
        propagate_field(&lone, &profile, c.window, c.dt)?
    };
    let doc = &mut out.document;
    doc.quantity("storage_time", storage, "s");
    doc.quantity("peak_depth", c.comb.d1, "1");
    doc.quantity("analytic_efficiency", analytic_efficiency(&c.comb), "1");
    doc.quantity("echo_efficiency", single.echo_efficiency(first, storage), "1");
    doc.quantity("echo_delay", single.echo_peak(first, storage) - first, "s");
    doc.quantity("dephasing_factor", dephasing_factor(c.comb.finesse), "1");
    if let Some(n) = c.dicke_samples {
        let ens = DickeEnsemble::sample_comb(&c.comb, n, config.seed_or_zero())?;
        doc.quantity("dicke_dephasing_factor", dicke_echo_amplitude(&ens, storage).norm_sqr(), "1");
    }
    out.plots.push(plotdata::afc_traces(&p));
    out.plots.push(plotdata::comb_profile(&profile));
    out.push_trace("afc_input", p.input_trace()?);
    out.push_trace("afc_output", p.output_trace()?);
    Ok(())
}

fn afc_spectral(c: &AfcSpectralConfig, exec: Exec, out: &mut RunOutput) -> Result<()> {
    let train = train(&c.pulse)?;
    let channels: Vec<Channel> = c.combs.iter().map(|&comb| Channel { comb, train: train.clone() }).collect();
    let settings = MultimodeSettings { window: c.window, dt: c.dt, resolution: c.resolution, filter_fwhm: c.filter_fwhm };
    let m = simulate_spectral_multimode(&channels, c.shift_spacing, &settings, exec)?;
    let doc = &mut out.document;
    for (i, ch) in m.channels.iter().enumerate() {
        doc.quantity(&format!("channel_{i}_center"), ch.center, "Hz");
        doc.quantity(&format!("channel_{i}_storage_time"), ch.storage_time, "s");
        doc.quantity(&format!("channel_{i}_echo_delay"), ch.echo_delay, "s");
    }
    doc.quantity("worst_leakage", m.worst_leakage_db(), "dB");
    let composite: Vec<CombSpec> = c.combs.clone();
    out.plots.push(plotdata::multimode_traces(&m));
    out.plots.push(plotdata::comb_profile(&build_composite(&composite, c.resolution)?));
    out.push_trace("afc_composite_output", TimeTrace::from_complex(0.0, m.dt, &m.composite_output())?);
    Ok(())
}

fn fit_file(c: &FitConfig, base_dir: &Path, exec: Exec, out: &mut RunOutput) -> Result<()> {
    let path = base_dir.join(&c.input);
    let (trace, _) = read_trace(&path)?;
    out.document.files.push(path.display().to_string());
    match c.model {
        FitModelKind::MultiExponential => {
            let mut opts = MultiExpOptions { components: c.components, offset: c.offset, ..Default::default() };
            opts.lm.max_iter = c.max_iterations;
            let r = fit_multiexponential(&trace, &opts, exec)?;
            out.plots.extend(plotdata::hole_decay(&trace, &r));
            out.document.add_fit(r);
        }
        FitModelKind::TwoPulse => {
            let curve = EchoDecayCurve::new(EchoAxis::T12, trace.times(), trace.samples().to_vec(), None)?;
            let r = fit_two_pulse(&curve)?;
            out.plots.extend(plotdata::two_pulse_decay(&curve.grid, &curve.intensities, &r));
            out.document.add_fit(r);
        }
        FitModelKind::HoleWidth => {
            let mut opts = HoleWidthOptions::default();
            opts.lm.max_iter = c.max_iterations;
            let r = fit_hole_width(&trace, &opts, exec)?;
            out.document.add_fit(r);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::parse_config;

    #[test]
    fn two_pulse_round_trip_through_config() {
        let cfg = parse_config("kind = 2ppe\necho.t2 = 552us\n").unwrap();
        let out = run(&cfg, Mode::Fit, Path::new("."), Exec::Sequential).unwrap();
        let fit = &out.document.fits[0];
        assert!((fit.value("t2") / 552e-6 - 1.0).abs() < 1e-9);
        assert_eq!(out.traces[0].name, "echo_2ppe");
        assert_eq!(out.plots.len(), 3);
    }

    #[test]
    fn afc_kinds_refuse_fit() {
        let cfg = parse_config(
            "kind = afc-temporal\ncomb.spacing = 200kHz\ncomb.finesse = 2\ncomb.peak_depth = 1\ncomb.bandwidth = 4MHz\npulse.duration = 200ns\n",
        )
        .unwrap();
        assert!(run(&cfg, Mode::Fit, Path::new("."), Exec::Sequential).is_err());
        let out = run(&cfg, Mode::Simulate, Path::new("."), Exec::Sequential).unwrap();
        let delay = out.document.quantities.iter().find(|q| q.name == "echo_delay").unwrap();
        assert!((delay.value - 5e-6).abs() < 0.1e-6);
    }
}
