use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the ordinates of a trace mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceKind {
    /// Non-negative optical intensity or echo intensity.
    Intensity,
    /// Signed real signal, e.g. a hole area carrying additive detector noise.
    Signal,
    /// Complex field envelope stored as interleaved (re, im) pairs.
    FieldEnvelope,
    /// Optical depth sampled on a frequency axis (hertz instead of seconds).
    OpticalDepth,
    /// Linewidth in hertz versus time.
    Linewidth,
}

impl TraceKind {
    pub fn requires_uniform_grid(self) -> bool {
        matches!(self, TraceKind::FieldEnvelope | TraceKind::OpticalDepth)
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Intensity => "intensity",
            TraceKind::Signal => "signal",
            TraceKind::FieldEnvelope => "field_envelope_real_imag",
            TraceKind::OpticalDepth => "optical_depth_vs_frequency",
            TraceKind::Linewidth => "linewidth",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "intensity" => TraceKind::Intensity,
            "signal" => TraceKind::Signal,
            "field_envelope_real_imag" => TraceKind::FieldEnvelope,
            "optical_depth_vs_frequency" => TraceKind::OpticalDepth,
            "linewidth" => TraceKind::Linewidth,
            _ => return None,
        })
    }

    pub fn value_unit(self) -> &'static str {
        match self {
            TraceKind::Intensity | TraceKind::Signal => "arb",
            TraceKind::FieldEnvelope => "sqrt_arb",
            TraceKind::OpticalDepth => "1",
            TraceKind::Linewidth => "Hz",
        }
    }

    pub fn axis_unit(self) -> &'static str {
        match self {
            TraceKind::OpticalDepth => "Hz",
            _ => "s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    Uniform { start: f64, step: f64 },
    Sampled(Vec<f64>),
}

/// A real-valued trace on a uniform or explicitly sampled abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    axis: Axis,
    samples: Vec<f64>,
    kind: TraceKind,
}

impl TimeTrace {
    pub fn uniform(kind: TraceKind, t_start: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", "must be > 0"));
        }
        if !t_start.is_finite() {
            return Err(Error::invalid("t_start", "must be finite"));
        }
        let trace = TimeTrace {
            axis: Axis::Uniform { start: t_start, step: dt },
            samples,
            kind,
        };
        trace.check_samples()?;
        Ok(trace)
    }

    pub fn sampled(kind: TraceKind, times: Vec<f64>, samples: Vec<f64>) -> Result<Self> {
        if kind.requires_uniform_grid() {
            return Err(Error::invalid(
                "times",
                format!("{} traces require a uniform grid", kind.name()),
            ));
        }
        if times.len() != samples.len() {
            return Err(Error::invalid("times", "length differs from samples"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("times", "must be finite"));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::UnsortedGrid { index: i + 1 });
        }
        let trace = TimeTrace {
            axis: Axis::Sampled(times),
            samples,
            kind,
        };
        trace.check_samples()?;
        Ok(trace)
    }

    pub fn from_complex(t_start: f64, dt: f64, field: &[Complex64]) -> Result<Self> {
        let samples = field.iter().flat_map(|c| [c.re, c.im]).collect();
        TimeTrace::uniform(TraceKind::FieldEnvelope, t_start, dt, samples)
    }

    fn check_samples(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("samples", "must be non-empty"));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("samples", format!("sample {i} is not finite")));
        }
        if self.kind == TraceKind::Intensity {
            if let Some(i) = self.samples.iter().position(|v| *v < 0.0) {
                return Err(Error::invalid(
                    "samples",
                    format!("intensity sample {i} is negative"),
                ));
            }
        }
        if self.kind == TraceKind::FieldEnvelope && !self.samples.len().is_multiple_of(2) {
            return Err(Error::invalid("samples", "field envelope needs (re, im) pairs"));
        }
        Ok(())
    }

    pub fn kind(&self) -> TraceKind {
        self.kind
    }

    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Number of abscissa points (pairs count once for field envelopes).
    pub fn len(&self) -> usize {
        match self.kind {
            TraceKind::FieldEnvelope => self.samples.len() / 2,
            _ => self.samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        match &self.axis {
            Axis::Uniform { start, .. } => *start,
            Axis::Sampled(t) => t[0],
        }
    }

    /// Grid step, `None` for explicitly sampled axes.
    pub fn dt(&self) -> Option<f64> {
        match &self.axis {
            Axis::Uniform { step, .. } => Some(*step),
            Axis::Sampled(_) => None,
        }
    }

    pub fn time(&self, i: usize) -> f64 {
        match &self.axis {
            Axis::Uniform { start, step } => start + i as f64 * step,
            Axis::Sampled(t) => t[i],
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn to_complex(&self) -> Option<Vec<Complex64>> {
        (self.kind == TraceKind::FieldEnvelope).then(|| {
            self.samples
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect()
        })
    }

    /// |E|² of a field envelope as an intensity trace on the same grid.
    pub fn intensity(&self) -> Result<TimeTrace> {
        let field = self
            .to_complex()
            .ok_or_else(|| Error::invalid("trace", "not a field envelope"))?;
        let dt = self.dt().expect("field envelopes are uniform");
        TimeTrace::uniform(
            TraceKind::Intensity,
            self.t_start(),
            dt,
            field.iter().map(|c| c.norm_sqr()).collect(),
        )
    }

    /// Same trace with every ordinate multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<TimeTrace> {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|v| *v *= c);
        out.check_samples()?;
        Ok(out)
    }

    /// Same ordinates with every abscissa multiplied by `c`.
    pub fn rescaled_axis(&self, c: f64) -> Result<TimeTrace> {
        match &self.axis {
            Axis::Uniform { start, step } => {
                TimeTrace::uniform(self.kind, start * c, step * c, self.samples.clone())
            }
            Axis::Sampled(t) => TimeTrace::sampled(
                self.kind,
                t.iter().map(|x| x * c).collect(),
                self.samples.clone(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_enforced() {
        assert!(TimeTrace::uniform(TraceKind::Intensity, 0.0, 0.0, vec![1.0]).is_err());
        assert!(TimeTrace::uniform(TraceKind::Intensity, 0.0, 1.0, vec![]).is_err());
        assert!(TimeTrace::uniform(TraceKind::Intensity, 0.0, 1.0, vec![-1.0]).is_err());
        assert!(TimeTrace::uniform(TraceKind::Signal, 0.0, 1.0, vec![-1.0]).is_ok());
        assert!(TimeTrace::uniform(TraceKind::Signal, 0.0, 1.0, vec![f64::NAN]).is_err());
        assert!(TimeTrace::sampled(TraceKind::Signal, vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(
            TimeTrace::sampled(TraceKind::OpticalDepth, vec![0.0, 1.0], vec![1.0, 2.0]).is_err()
        );
    }

    #[test]
    fn complex_round_trip() {
        let field = vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)];
        let trace = TimeTrace::from_complex(0.0, 1e-9, &field).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.to_complex().unwrap(), field);
        assert_eq!(trace.intensity().unwrap().samples(), &[5.0, 0.3125]);
    }
}
