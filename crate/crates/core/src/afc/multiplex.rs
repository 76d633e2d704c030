//! Frequency-multiplexed storage: several disjoint combs share one medium and
//! each input train is translated onto its own comb before entering it.
//!
//! Simulation runs in a frame centred between the outermost channels so the
//! sampling rate only has to cover the occupied span. Readout separates the
//! channels with a Lorentzian filter cavity tuned to each comb.

use num_complex::Complex64;

use super::comb::{build_composite, CombSpec};
use super::filter::filter_field;
use super::propagate::{energy, peak_time, Grid, PulseTrainSpec};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub comb: CombSpec,
    /// Carriers are given relative to the comb centre; the ideal shifter adds
    /// `comb.center_detuning`.
    pub train: PulseTrainSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultimodeSettings {
    pub window: f64,
    pub dt: f64,
    /// Frequency step of the composite comb profile.
    pub resolution: f64,
    pub filter_fwhm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    pub center: f64,
    pub storage_time: f64,
    pub input: Vec<Complex64>,
    /// This channel's light alone after the medium.
    pub output: Vec<Complex64>,
    /// The combined output of all channels seen through this channel's filter.
    pub filtered: Vec<Complex64>,
    /// This channel's input seen through the same filter; timing reference.
    pub reference: Vec<Complex64>,
    /// Filtered echo peak minus filtered reference peak for the first pulse.
    pub echo_delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodeOutput {
    pub dt: f64,
    /// Absolute frequency of the simulation frame's zero.
    pub reference: f64,
    pub channels: Vec<ChannelOutput>,
    /// `leakage[i][j]`: energy of channel i's first echo passed by filter j,
    /// relative to what filter i passes.
    pub leakage: Vec<Vec<f64>>,
}

impl MultimodeOutput {
    pub fn composite_output(&self) -> Vec<Complex64> {
        let n = self.channels.first().map_or(0, |c| c.output.len());
        (0..n)
            .map(|k| self.channels.iter().map(|c| c.output[k]).sum())
            .collect()
    }

    /// Worst off-diagonal leakage in dB (more negative is better).
    pub fn worst_leakage_db(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, row) in self.leakage.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    worst = worst.max(*v);
                }
            }
        }
        10.0 * worst.log10()
    }
}

fn check_channels(channels: &[Channel], shift_spacing: f64) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::invalid("channels", "need at least one channel"));
    }
    for c in channels {
        c.comb.check()?;
    }
    for i in 0..channels.len() {
        for j in i + 1..channels.len() {
            let (a, b) = (channels[i].comb.band(), channels[j].comb.band());
            if a.0 < b.1 && b.0 < a.1 {
                return Err(Error::OverlappingChannels { first: i, second: j });
            }
        }
    }
    if channels.len() > 1 {
        if !(shift_spacing > 0.0) {
            return Err(Error::invalid("shift_spacing", "must be > 0"));
        }
        for (i, w) in channels.windows(2).enumerate() {
            let step = w[1].comb.center_detuning - w[0].comb.center_detuning;
            if (step - shift_spacing).abs() > 1e-6 * shift_spacing {
                return Err(Error::invalid(
                    "shift_spacing",
                    format!("channels {i} and {} are {step:e} Hz apart", i + 1),
                ));
            }
        }
    }
    Ok(())
}

pub fn simulate_spectral_multimode(
    channels: &[Channel],
    shift_spacing: f64,
    settings: &MultimodeSettings,
    exec: Exec,
) -> Result<MultimodeOutput> {
    check_channels(channels, shift_spacing)?;
    if !(settings.filter_fwhm > 0.0) {
        return Err(Error::invalid("filter_fwhm", "must be > 0"));
    }
    let centers: Vec<f64> = channels.iter().map(|c| c.comb.center_detuning).collect();
    let lo = centers.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reference = 0.5 * (lo + hi);

    let specs: Vec<CombSpec> = channels.iter().map(|c| c.comb).collect();
    let profile = build_composite(&specs, settings.resolution)?.shifted(reference);
    let trains: Vec<PulseTrainSpec> = channels
        .iter()
        .map(|c| c.train.shifted(c.comb.center_detuning - reference))
        .collect();
    let end = trains.iter().map(|t| t.end()).fold(f64::NEG_INFINITY, f64::max);
    let dt = settings.dt;
    let grid = Grid::plan(&profile, end, settings.window, dt)?;
    let nyquist = 0.5 / dt;
    for t in &trains {
        if let Some(p) = t.pulses().iter().find(|p| p.carrier_detuning.abs() >= nyquist) {
            return Err(Error::Aliasing(format!(
                "shifted carrier {:e} Hz reaches past the Nyquist frequency",
                p.carrier_detuning
            )));
        }
    }
    let response = grid.response(&profile);

    let fields: Vec<(Vec<Complex64>, Vec<Complex64>)> = exec.map(trains.len(), |i| {
        let input = trains[i].sample(grid.n_out, dt);
        let output = grid.apply(&response, &input);
        (input, output)
    });
    let composite: Vec<Complex64> = (0..grid.n_out)
        .map(|k| fields.iter().map(|(_, o)| o[k]).sum())
        .collect();

    let fwhm = settings.filter_fwhm;
    let rel_centers: Vec<f64> = centers.iter().map(|c| c - reference).collect();
    let storage: Vec<f64> = specs.iter().map(|s| s.storage_time()).collect();
    let first: Vec<f64> = trains.iter().map(|t| t.pulses()[0].t_center).collect();

    // filter j applied to channel i's output alone, for the leakage matrix
    let n = channels.len();
    let cross: Vec<Vec<Complex64>> = exec.map(n * n, |ij| {
        let (i, j) = (ij / n, ij % n);
        filter_field(&fields[i].1, dt, rel_centers[j], fwhm)
    });
    let gate = |i: usize| (first[i] + 0.5 * storage[i], first[i] + 1.5 * storage[i]);
    let leakage: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let (a, b) = gate(i);
            let own = energy(&cross[i * n + i], dt, a, b);
            (0..n).map(|j| energy(&cross[i * n + j], dt, a, b) / own).collect()
        })
        .collect();

    let outputs: Vec<ChannelOutput> = exec.map(n, |i| {
        let filtered = filter_field(&composite, dt, rel_centers[i], fwhm);
        let reference = filter_field(&fields[i].0, dt, rel_centers[i], fwhm);
        let (a, b) = gate(i);
        let t_ref = peak_time(&reference, dt, first[i] - 0.5 * storage[i], first[i] + 0.5 * storage[i]);
        let t_echo = peak_time(&filtered, dt, a, b);
        ChannelOutput {
            center: centers[i],
            storage_time: storage[i],
            input: fields[i].0.clone(),
            output: fields[i].1.clone(),
            filtered,
            reference,
            echo_delay: t_echo - t_ref,
        }
    });

    Ok(MultimodeOutput { dt, reference, channels: outputs, leakage })
}
