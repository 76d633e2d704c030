//! Single-pole Lorentzian bandpass, the response of a narrow filter cavity.

use num_complex::Complex64;

use super::fft;
use crate::error::{Error, Result};
use crate::trace::{TimeTrace, TraceKind};

/// L(f) = 1 / (1 + i·2(f − f_c)/fwhm). Causal: its impulse response is
/// π·fwhm·e^{−π fwhm t} e^{i2π f_c t} for t ≥ 0.
pub fn lorentzian(f: f64, center: f64, fwhm: f64) -> Complex64 {
    1.0 / Complex64::new(1.0, 2.0 * (f - center) / fwhm)
}

pub(crate) fn filter_field(field: &[Complex64], dt: f64, center: f64, fwhm: f64) -> Vec<Complex64> {
    let n = (2 * field.len()).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..field.len()].copy_from_slice(field);
    fft::forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        *v *= lorentzian(fft::bin_frequency(k, n, dt), center, fwhm);
    }
    fft::inverse(&mut buf);
    buf.truncate(field.len());
    buf
}

/// Filters a complex field-envelope trace; the result keeps the input grid.
pub fn filter_cavity(trace: &TimeTrace, center: f64, fwhm: f64) -> Result<TimeTrace> {
    if !(fwhm > 0.0 && fwhm.is_finite()) {
        return Err(Error::invalid("fwhm", "must be > 0"));
    }
    if trace.kind() != TraceKind::FieldEnvelope {
        return Err(Error::invalid("trace", "filtering needs a complex field envelope"));
    }
    let field = trace.to_complex().expect("checked kind");
    let dt = trace.dt().expect("field envelopes are uniform");
    TimeTrace::from_complex(trace.t_start(), dt, &filter_field(&field, dt, center, fwhm))
}
