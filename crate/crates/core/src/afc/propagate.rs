//! Single-pass linear propagation of a pulse train through an absorber.
//!
//! Fields are complex envelopes E(t) e^{+i2πδt} in a frame rotating at the
//! comb's reference frequency. The output is IFFT(H · FFT(E)) on a zero-padded
//! grid, truncated back to the requested window.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::comb::CombProfile;
use super::fft;
use super::transfer::minimum_phase;
use crate::error::{Error, Result};
use crate::trace::{TimeTrace, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Envelope {
    /// Flat top of length `duration`.
    #[default]
    Square,
    /// Gaussian whose intensity FWHM is `duration`.
    Gaussian,
}

impl Envelope {
    /// Field amplitude at time `x` from the pulse centre.
    pub fn eval(self, x: f64, duration: f64) -> f64 {
        match self {
            Envelope::Square => {
                if x.abs() <= 0.5 * duration {
                    1.0
                } else {
                    0.0
                }
            }
            Envelope::Gaussian => (-2.0 * LN_2 * (x / duration).powi(2)).exp(),
        }
    }

    /// Half-extent beyond which the intensity is negligible (< 2e-5 of peak).
    pub fn reach(self, duration: f64) -> f64 {
        match self {
            Envelope::Square => 0.5 * duration,
            Envelope::Gaussian => 2.0 * duration,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Envelope::Square => "square",
            Envelope::Gaussian => "gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub t_center: f64,
    pub duration: f64,
    pub carrier_detuning: f64,
    pub amplitude: f64,
}

impl Pulse {
    pub fn new(t_center: f64, duration: f64, carrier_detuning: f64, amplitude: f64) -> Result<Self> {
        let p = Pulse { t_center, duration, carrier_detuning, amplitude };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration", "must be > 0"));
        }
        if !(self.t_center.is_finite() && self.carrier_detuning.is_finite() && self.amplitude.is_finite()) {
            return Err(Error::invalid("pulse", "fields must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrainSpec {
    pulses: Vec<Pulse>,
    envelope: Envelope,
}

impl PulseTrainSpec {
    pub fn new(pulses: Vec<Pulse>, envelope: Envelope) -> Result<Self> {
        if pulses.is_empty() {
            return Err(Error::invalid("pulses", "train is empty"));
        }
        for p in &pulses {
            p.check()?;
        }
        if let Some(i) = pulses.windows(2).position(|w| w[1].t_center < w[0].t_center) {
            return Err(Error::invalid(
                "pulses",
                format!("pulse {} starts before pulse {i}", i + 1),
            ));
        }
        Ok(PulseTrainSpec { pulses, envelope })
    }

    pub fn single(t_center: f64, duration: f64, envelope: Envelope) -> Result<Self> {
        PulseTrainSpec::new(vec![Pulse::new(t_center, duration, 0.0, 1.0)?], envelope)
    }

    /// Equally spaced pulses, one per entry of `amplitudes`.
    pub fn periodic(
        first_center: f64,
        duration: f64,
        period: f64,
        amplitudes: &[f64],
        envelope: Envelope,
    ) -> Result<Self> {
        let pulses = amplitudes
            .iter()
            .enumerate()
            .map(|(i, &a)| Pulse::new(first_center + i as f64 * period, duration, 0.0, a))
            .collect::<Result<Vec<_>>>()?;
        PulseTrainSpec::new(pulses, envelope)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    /// Every carrier moved by `shift` (ideal frequency translation).
    pub fn shifted(&self, shift: f64) -> PulseTrainSpec {
        let mut out = self.clone();
        out.pulses.iter_mut().for_each(|p| p.carrier_detuning += shift);
        out
    }

    /// Every amplitude multiplied by `a`.
    pub fn scaled(&self, a: f64) -> PulseTrainSpec {
        let mut out = self.clone();
        out.pulses.iter_mut().for_each(|p| p.amplitude *= a);
        out
    }

    pub fn end(&self) -> f64 {
        self.pulses
            .iter()
            .map(|p| p.t_center + self.envelope.reach(p.duration))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn field(&self, t: f64) -> Complex64 {
        self.pulses
            .iter()
            .map(|p| {
                let env = p.amplitude * self.envelope.eval(t - p.t_center, p.duration);
                if env == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::from_polar(env, 2.0 * PI * p.carrier_detuning * t)
                }
            })
            .sum()
    }

    pub fn sample(&self, n: usize, dt: f64) -> Vec<Complex64> {
        (0..n).map(|i| self.field(i as f64 * dt)).collect()
    }
}

/// Sampling plan shared by every propagation through one profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Grid {
    pub n_out: usize,
    pub n_fft: usize,
    pub dt: f64,
}

impl Grid {
    pub(crate) fn plan(profile: &CombProfile, train_end: f64, window: f64, dt: f64) -> Result<Grid> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::invalid("window", "must be > 0"));
        }
        let bandwidth = profile.bandwidth();
        if dt > 1.0 / (4.0 * bandwidth) * (1.0 + 1e-12) {
            return Err(Error::Aliasing(format!(
                "dt = {dt:e} s exceeds 1/(4 bandwidth) = {:e} s",
                1.0 / (4.0 * bandwidth)
            )));
        }
        let (lo, hi) = profile.band();
        let nyquist = 0.5 / dt;
        if lo.abs().max(hi.abs()) >= nyquist {
            return Err(Error::Aliasing(format!(
                "comb band [{lo:e}, {hi:e}] Hz reaches past the Nyquist frequency {nyquist:e} Hz"
            )));
        }
        let longest = profile
            .spacings()
            .iter()
            .map(|d| 1.0 / d)
            .fold(0.0, f64::max);
        let needed = train_end + 2.0 * longest;
        if window < needed * (1.0 - 1e-12) {
            return Err(Error::Aliasing(format!(
                "window {window:e} s is shorter than train end + 2/delta = {needed:e} s"
            )));
        }
        let n_out = (window / dt).round() as usize;
        let n_spectral = (1.0 / (dt * profile.df())).ceil() as usize;
        let n_fft = (2 * n_out).max(n_spectral).next_power_of_two();
        Ok(Grid { n_out, n_fft, dt })
    }

    /// Causal response of `profile` on this grid's DFT bins.
    pub(crate) fn response(&self, profile: &CombProfile) -> Vec<Complex64> {
        let log_modulus: Vec<f64> = (0..self.n_fft)
            .map(|k| -0.5 * profile.eval(fft::bin_frequency(k, self.n_fft, self.dt)))
            .collect();
        minimum_phase(&log_modulus)
    }

    pub(crate) fn apply(&self, response: &[Complex64], input: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        buf[..input.len()].copy_from_slice(input);
        fft::forward(&mut buf);
        buf.iter_mut().zip(response).for_each(|(e, h)| *e *= h);
        fft::inverse(&mut buf);
        buf.truncate(self.n_out);
        buf
    }
}

/// Input and output field envelopes on t_i = i·dt.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub dt: f64,
    pub input: Vec<Complex64>,
    pub output: Vec<Complex64>,
}

impl Propagation {
    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    pub fn input_trace(&self) -> Result<TimeTrace> {
        TimeTrace::from_complex(0.0, self.dt, &self.input)
    }

    pub fn output_trace(&self) -> Result<TimeTrace> {
        TimeTrace::from_complex(0.0, self.dt, &self.output)
    }

    pub fn output_intensity(&self) -> Result<TimeTrace> {
        intensity_trace(&self.output, self.dt)
    }

    pub fn input_energy(&self) -> f64 {
        energy(&self.input, self.dt, 0.0, f64::INFINITY)
    }

    pub fn output_energy(&self) -> f64 {
        energy(&self.output, self.dt, 0.0, f64::INFINITY)
    }

    /// Output energy in [t_c + T/2, t_c + 3T/2) over input energy in
    /// [t_c − T/2, t_c + T/2), with T the storage time. Meaningful for a pulse
    /// isolated by at least T from its neighbours.
    pub fn echo_efficiency(&self, t_center: f64, storage: f64) -> f64 {
        let e_in = energy(&self.input, self.dt, t_center - 0.5 * storage, t_center + 0.5 * storage);
        let e_out = energy(&self.output, self.dt, t_center + 0.5 * storage, t_center + 1.5 * storage);
        e_out / e_in
    }

    /// Time of the brightest output sample within half a storage time of
    /// t_c + T.
    pub fn echo_peak(&self, t_center: f64, storage: f64) -> f64 {
        peak_time(&self.output, self.dt, t_center + 0.5 * storage, t_center + 1.5 * storage)
    }
}

pub(crate) fn intensity_trace(field: &[Complex64], dt: f64) -> Result<TimeTrace> {
    TimeTrace::uniform(
        TraceKind::Intensity,
        0.0,
        dt,
        field.iter().map(|c| c.norm_sqr()).collect(),
    )
}

fn index_range(len: usize, dt: f64, t0: f64, t1: f64) -> std::ops::Range<usize> {
    let a = (t0 / dt).ceil().max(0.0) as usize;
    let b = if t1.is_finite() { (t1 / dt).ceil().max(0.0) as usize } else { len };
    a.min(len)..b.min(len)
}

/// ∫|E|² dt over [t0, t1) by the rectangle rule.
pub fn energy(field: &[Complex64], dt: f64, t0: f64, t1: f64) -> f64 {
    field[index_range(field.len(), dt, t0, t1)]
        .iter()
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        * dt
}

/// Time of max |E|² over [t0, t1); the earliest sample wins ties.
pub fn peak_time(field: &[Complex64], dt: f64, t0: f64, t1: f64) -> f64 {
    let r = index_range(field.len(), dt, t0, t1);
    let start = r.start;
    let (best, _) = field[r]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, c)| {
            if c.norm_sqr() > acc.1 {
                (i, c.norm_sqr())
            } else {
                acc
            }
        });
    (start + best) as f64 * dt
}

/// Transmitted field of `train` through `profile`, sampled every `dt` over
/// [0, window).
pub fn propagate_field(
    train: &PulseTrainSpec,
    profile: &CombProfile,
    window: f64,
    dt: f64,
) -> Result<Propagation> {
    let grid = Grid::plan(profile, train.end(), window, dt)?;
    let nyquist = 0.5 / dt;
    if let Some(p) = train.pulses().iter().find(|p| p.carrier_detuning.abs() >= nyquist) {
        return Err(Error::Aliasing(format!(
            "carrier {:e} Hz reaches past the Nyquist frequency {nyquist:e} Hz",
            p.carrier_detuning
        )));
    }
    let input = train.sample(grid.n_out, dt);
    let output = grid.apply(&grid.response(profile), &input);
    Ok(Propagation { dt, input, output })
}

/// Output intensity |E_out(t)|², transmitted light and echoes together.
pub fn propagate(
    train: &PulseTrainSpec,
    profile: &CombProfile,
    window: f64,
    dt: f64,
) -> Result<TimeTrace> {
    propagate_field(train, profile, window, dt)?.output_intensity()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afc::comb::{analytic_efficiency, build_comb, CombSpec, ToothShape};
    use proptest::prelude::*;

    fn comb(delta: f64, finesse: f64, d1: f64, d0: f64, bw: f64) -> (CombSpec, CombProfile) {
        let spec = CombSpec::new(delta, finesse, d1, d0, bw, 0.0, ToothShape::Gaussian).unwrap();
        let profile = build_comb(&spec, spec.tooth_fwhm() / 10.0).unwrap();
        (spec, profile)
    }

    #[test]
    fn transparent_medium_passes_input_unchanged() {
        let freqs: Vec<f64> = (0..1001).map(|i| -5e6 + i as f64 * 1e4).collect();
        let profile = CombProfile::from_samples(&freqs, vec![0.0; 1001], 0.0).unwrap();
        let train = PulseTrainSpec::single(1e-6, 200e-9, Envelope::Gaussian).unwrap();
        let p = propagate_field(&train, &profile, 4e-6, 10e-9).unwrap();
        for (a, b) in p.input.iter().zip(&p.output) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_pulse_echo_after_storage_time() {
        let (spec, profile) = comb(200e3, 2.0, 1.0, 0.0, 10e6);
        let dt = 5e-9;
        let train = PulseTrainSpec::single(500e-9, 200e-9, Envelope::Gaussian).unwrap();
        let p = propagate_field(&train, &profile, 12e-6, dt).unwrap();
        let t = p.echo_peak(500e-9, spec.storage_time());
        assert!((t - 5.5e-6).abs() <= dt, "echo at {t}");
    }

    #[test]
    fn linearity_in_amplitude() {
        let (_, profile) = comb(500e3, 3.0, 2.0, 0.1, 10e6);
        let train = PulseTrainSpec::single(300e-9, 150e-9, Envelope::Square).unwrap();
        let base = propagate_field(&train, &profile, 6e-6, 10e-9).unwrap();
        let doubled = propagate_field(&train.scaled(2.0), &profile, 6e-6, 10e-9).unwrap();
        for (a, b) in base.output.iter().zip(&doubled.output) {
            assert_eq!(a * 2.0, *b);
        }
        let a = 0.37;
        let scaled = propagate_field(&train.scaled(a), &profile, 6e-6, 10e-9).unwrap();
        let peak = base.output.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for (x, y) in base.output.iter().zip(&scaled.output) {
            assert!((x * a - y).norm() <= 1e-12 * peak);
        }
    }

    #[test]
    fn efficiency_tracks_formula_in_weak_regime() {
        let (spec, profile) = comb(200e3, 2.0, 0.6, 0.2, 10e6);
        let train = PulseTrainSpec::single(1e-6, 200e-9, Envelope::Gaussian).unwrap();
        let p = propagate_field(&train, &profile, 12e-6, 5e-9).unwrap();
        let measured = p.echo_efficiency(1e-6, spec.storage_time());
        let formula = analytic_efficiency(&spec);
        assert!((measured / formula - 1.0).abs() < 0.15, "{measured} vs {formula}");
    }

    #[test]
    fn rejects_coarse_sampling_and_short_window() {
        let (_, profile) = comb(200e3, 2.0, 1.0, 0.0, 10e6);
        let train = PulseTrainSpec::single(500e-9, 200e-9, Envelope::Square).unwrap();
        assert!(matches!(
            propagate_field(&train, &profile, 12e-6, 30e-9),
            Err(Error::Aliasing(_))
        ));
        assert!(matches!(
            propagate_field(&train, &profile, 8e-6, 5e-9),
            Err(Error::Aliasing(_))
        ));
    }

    #[test]
    fn train_must_be_time_ordered() {
        let a = Pulse::new(2e-6, 1e-7, 0.0, 1.0).unwrap();
        let b = Pulse::new(1e-6, 1e-7, 0.0, 1.0).unwrap();
        assert!(PulseTrainSpec::new(vec![a, b], Envelope::Square).is_err());
        assert!(Pulse::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn passive_medium_never_adds_energy(
            finesse in 1.5f64..8.0,
            d1 in 0.0f64..6.0,
            d0 in 0.0f64..1.0,
            duration in 50e-9f64..400e-9,
        ) {
            let (_, profile) = comb(1e6, finesse, d1, d0, 10e6);
            let train = PulseTrainSpec::single(0.5e-6, duration, Envelope::Square).unwrap();
            let p = propagate_field(&train, &profile, 3e-6, 20e-9).unwrap();
            prop_assert!(p.output_energy() <= p.input_energy() * (1.0 + 1e-6));
        }

        #[test]
        fn first_echo_sits_at_inverse_spacing(
            delta in 50e3f64..1e6,
            finesse in 2.0f64..10.0,
        ) {
            let bw = 20.0 * delta;
            let dt = 1.0 / (8.0 * bw);
            let tau = 4.0 / bw;
            let (spec, profile) = comb(delta, finesse, 1.0, 0.0, bw);
            let t_c = (2.0 * tau / dt).ceil() * dt;
            let train = PulseTrainSpec::single(t_c, tau, Envelope::Gaussian).unwrap();
            let window = t_c + 2.0 * tau + 2.5 / delta;
            let p = propagate_field(&train, &profile, window, dt).unwrap();
            let t = p.echo_peak(t_c, spec.storage_time());
            prop_assert!((t - t_c - 1.0 / delta).abs() <= dt * (1.0 + 1e-9), "{} vs {}", t - t_c, 1.0 / delta);
        }
    }
}
