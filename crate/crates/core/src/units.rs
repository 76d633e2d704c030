//! Unit handling at the I/O boundary.
//!
//! Everything inside the crate is SI (seconds, hertz, tesla, kelvin). Laboratory
//! units (gauss, kHz, ms, ...) are converted here and nowhere else. Every unit is
//! an exact decimal power of its SI base, so conversion is a multiplication or a
//! division by an exactly representable power of ten.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Time,
    Frequency,
    MagneticField,
    Temperature,
    Dimensionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Second,
    Millisecond,
    Microsecond,
    Nanosecond,
    Hertz,
    Kilohertz,
    Megahertz,
    Gigahertz,
    Tesla,
    Millitesla,
    Gauss,
    Kilogauss,
    Kelvin,
    Millikelvin,
    One,
}

impl Unit {
    pub const ALL: [Unit; 15] = [
        Unit::Second,
        Unit::Millisecond,
        Unit::Microsecond,
        Unit::Nanosecond,
        Unit::Hertz,
        Unit::Kilohertz,
        Unit::Megahertz,
        Unit::Gigahertz,
        Unit::Tesla,
        Unit::Millitesla,
        Unit::Gauss,
        Unit::Kilogauss,
        Unit::Kelvin,
        Unit::Millikelvin,
        Unit::One,
    ];

    pub fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            Second | Millisecond | Microsecond | Nanosecond => Dimension::Time,
            Hertz | Kilohertz | Megahertz | Gigahertz => Dimension::Frequency,
            Tesla | Millitesla | Gauss | Kilogauss => Dimension::MagneticField,
            Kelvin | Millikelvin => Dimension::Temperature,
            One => Dimension::Dimensionless,
        }
    }

    /// Decimal exponent relative to the SI base unit of the dimension.
    fn exponent(self) -> i32 {
        use Unit::*;
        match self {
            Second | Hertz | Tesla | Kelvin | One => 0,
            Millisecond | Millitesla | Millikelvin => -3,
            Microsecond => -6,
            Nanosecond => -9,
            Kilohertz => 3,
            Megahertz => 6,
            Gigahertz => 9,
            Gauss => -4,
            Kilogauss => -1,
        }
    }

    pub fn si(dimension: Dimension) -> Unit {
        match dimension {
            Dimension::Time => Unit::Second,
            Dimension::Frequency => Unit::Hertz,
            Dimension::MagneticField => Unit::Tesla,
            Dimension::Temperature => Unit::Kelvin,
            Dimension::Dimensionless => Unit::One,
        }
    }

    pub fn symbol(self) -> &'static str {
        use Unit::*;
        match self {
            Second => "s",
            Millisecond => "ms",
            Microsecond => "us",
            Nanosecond => "ns",
            Hertz => "Hz",
            Kilohertz => "kHz",
            Megahertz => "MHz",
            Gigahertz => "GHz",
            Tesla => "T",
            Millitesla => "mT",
            Gauss => "G",
            Kilogauss => "kG",
            Kelvin => "K",
            Millikelvin => "mK",
            One => "1",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unit = match s {
            "s" => Unit::Second,
            "ms" => Unit::Millisecond,
            "us" | "μs" | "µs" => Unit::Microsecond,
            "ns" => Unit::Nanosecond,
            "Hz" => Unit::Hertz,
            "kHz" => Unit::Kilohertz,
            "MHz" => Unit::Megahertz,
            "GHz" => Unit::Gigahertz,
            "T" => Unit::Tesla,
            "mT" => Unit::Millitesla,
            "G" => Unit::Gauss,
            "kG" => Unit::Kilogauss,
            "K" => Unit::Kelvin,
            "mK" => Unit::Millikelvin,
            "1" | "" => Unit::One,
            other => return Err(Error::UnknownUnit(other.to_string())),
        };
        Ok(unit)
    }
}

/// Converts `value` between two units of the same dimension.
pub fn unit_convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::IncompatibleUnits {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    let shift = from.exponent() - to.exponent();
    let scale = 10f64.powi(shift.abs());
    Ok(if shift >= 0 { value * scale } else { value / scale })
}

pub fn to_si(value: f64, unit: Unit) -> f64 {
    // same dimension by construction
    unit_convert(value, unit, Unit::si(unit.dimension())).expect("same dimension")
}

/// Splits a scalar such as `60us`, `200G` or `-1.5e-3 s` into its number and unit.
pub fn parse_quantity(text: &str) -> Result<(f64, Option<Unit>)> {
    let text = text.trim();
    let bytes = text.as_bytes();
    let mut end = 0;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let numeric = c.is_ascii_digit() || c == '.' || c == '+' || c == '-';
        let exponent = (c == 'e' || c == 'E')
            && end > 0
            && bytes
                .get(end + 1)
                .map(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+')
                .unwrap_or(false);
        if numeric || exponent {
            end += 1;
        } else {
            break;
        }
    }
    let (number, suffix) = text.split_at(end);
    let value: f64 = number
        .parse()
        .map_err(|_| Error::invalid("quantity", format!("`{text}` is not a number")))?;
    if !value.is_finite() {
        return Err(Error::invalid("quantity", format!("`{text}` is not finite")));
    }
    let suffix = suffix.trim();
    if suffix.is_empty() {
        Ok((value, None))
    } else {
        Ok((value, Some(suffix.parse()?)))
    }
}
