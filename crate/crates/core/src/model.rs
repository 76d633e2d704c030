//! Validated physical parameter types shared by every engine. All values SI.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the Zeeman-lifetime table: lifetimes of the two magnetically
/// inequivalent subgroups at a given field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanEntry {
    pub field: f64,
    pub lifetime_short: f64,
    pub lifetime_long: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    /// Excited-state lifetime T1.
    pub t1_excited: f64,
    /// Bottleneck-level lifetime T_B.
    pub t_bottleneck: f64,
    pub zeeman_table: Vec<ZeemanEntry>,
    pub inhomogeneous_bandwidth: f64,
    pub g_factors: BTreeMap<String, f64>,
    pub subgroup_weights: [f64; 2],
}

/// A failed invariant: the offending field and the rule it breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.rule)
    }
}

impl MaterialModel {
    /// 1% Tm:YGG. The lifetimes, bandwidth and g-factors are measured values;
    /// the Zeeman table is illustrative only (minutes-scale lifetimes peaking
    /// around a few hundred gauss), not tabulated ground truth.
    pub fn tm_ygg() -> Self {
        let mut g_factors = BTreeMap::new();
        g_factors.insert("tm".to_string(), 0.01);
        g_factors.insert("ga69".to_string(), 7.14e-4);
        g_factors.insert("ga71".to_string(), 9.2e-4);
        g_factors.insert("y89".to_string(), 1.43e-5);
        let zeeman = |field: f64, short: f64, long: f64| ZeemanEntry {
            field,
            lifetime_short: short,
            lifetime_long: long,
        };
        MaterialModel {
            t1_excited: 1.99e-3,
            t_bottleneck: 55.14e-3,
            zeeman_table: vec![
                zeeman(0.01, 5.0, 20.0),
                zeeman(0.02, 30.0, 120.0),
                zeeman(0.05, 60.0, 300.0),
                zeeman(0.1, 40.0, 200.0),
                zeeman(0.3, 10.0, 60.0),
                zeeman(0.6, 3.0, 20.0),
            ],
            inhomogeneous_bandwidth: 56e9,
            g_factors,
            subgroup_weights: [0.5, 0.5],
        }
    }

    /// Checks every invariant; never aborts, returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &'static str, rule: &str| {
            out.push(Violation {
                field,
                rule: rule.to_string(),
            })
        };
        if !(self.t1_excited > 0.0) {
            push("t1_excited", "must be > 0");
        }
        if !(self.t_bottleneck > 0.0) {
            push("t_bottleneck", "must be > 0");
        }
        if self.t1_excited > 0.0
            && self.t_bottleneck > 0.0
            && self.t1_excited >= self.t_bottleneck
        {
            push("t1_excited", "must be < t_bottleneck");
        }
        if self
            .zeeman_table
            .windows(2)
            .any(|w| !(w[1].field > w[0].field))
        {
            push("zeeman_table", "not strictly increasing");
        }
        if self
            .zeeman_table
            .iter()
            .any(|e| !(e.lifetime_short > 0.0 && e.lifetime_long > 0.0))
        {
            push("zeeman_table", "lifetimes must be > 0");
        }
        if self.zeeman_table.iter().any(|e| !(e.field >= 0.0)) {
            push("zeeman_table", "fields must be >= 0");
        }
        if !(self.inhomogeneous_bandwidth > 0.0) {
            push("inhomogeneous_bandwidth", "must be > 0");
        }
        if self.g_factors.values().any(|g| !g.is_finite()) {
            push("g_factors", "must be finite");
        }
        let [w0, w1] = self.subgroup_weights;
        if !(w0 >= 0.0 && w1 >= 0.0) {
            push("subgroup_weights", "must be non-negative");
        }
        if !((w0 + w1 - 1.0).abs() <= 1e-12) {
            push("subgroup_weights", "must sum to 1");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub b_field: f64,
    pub temperature: f64,
}

impl FieldPoint {
    pub fn new(b_field: f64, temperature: f64) -> Result<Self> {
        if !(b_field >= 0.0) {
            return Err(Error::invalid("b_field", "must be >= 0"));
        }
        if !(temperature > 0.0) {
            return Err(Error::invalid("temperature", "must be > 0"));
        }
        Ok(FieldPoint {
            b_field,
            temperature,
        })
    }
}

/// Parameters of the time-dependent effective linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiffusionParams {
    /// Linewidth at the reference time `t0`.
    pub gamma0: f64,
    /// TLS coupling coefficient, hertz per natural-log unit of time.
    pub gamma_tls: f64,
    /// Maximum spectral-diffusion broadening.
    pub gamma_sd: f64,
    /// Spectral-diffusion rate.
    pub r_sd: f64,
    /// Minimum measurement timescale.
    pub t0: f64,
}

impl SpectralDiffusionParams {
    pub fn new(gamma0: f64, gamma_tls: f64, gamma_sd: f64, r_sd: f64, t0: f64) -> Result<Self> {
        let p = SpectralDiffusionParams {
            gamma0,
            gamma_tls,
            gamma_sd,
            r_sd,
            t0,
        };
        p.check()?;
        Ok(p)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) {
            return Err(Error::invalid("gamma0", "must be > 0"));
        }
        if !(self.gamma_tls >= 0.0) {
            return Err(Error::invalid("gamma_tls", "must be >= 0"));
        }
        if !(self.gamma_sd >= 0.0) {
            return Err(Error::invalid("gamma_sd", "must be >= 0"));
        }
        if !(self.r_sd >= 0.0) {
            return Err(Error::invalid("r_sd", "must be >= 0"));
        }
        if !(self.t0 > 0.0) {
            return Err(Error::invalid("t0", "must be > 0"));
        }
        Ok(())
    }
}

/// Weights of the excited, bottleneck and Zeeman terms in the grating-contrast
/// population factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationAmplitudes {
    pub c1: f64,
    pub cb: f64,
    pub cz: f64,
}

impl PopulationAmplitudes {
    pub fn new(c1: f64, cb: f64, cz: f64) -> Result<Self> {
        if !(c1 >= 0.0 && cb >= 0.0 && cz >= 0.0) {
            return Err(Error::invalid("population amplitudes", "must be >= 0"));
        }
        if c1 + cb + cz <= 0.0 {
            return Err(Error::invalid(
                "population amplitudes",
                "at least one must be > 0",
            ));
        }
        Ok(PopulationAmplitudes { c1, cb, cz })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.c1, self.cb, self.cz]
    }
}

impl Default for PopulationAmplitudes {
    fn default() -> Self {
        PopulationAmplitudes {
            c1: 1.0 / 3.0,
            cb: 1.0 / 3.0,
            cz: 1.0 / 3.0,
        }
    }
}

/// (T1, T_B, T_Z) used by the population factor of the three-pulse echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationLifetimes {
    pub t1: f64,
    pub tb: f64,
    pub tz: f64,
}

impl PopulationLifetimes {
    pub fn new(t1: f64, tb: f64, tz: f64) -> Result<Self> {
        if !(t1 > 0.0 && tb > 0.0 && tz > 0.0) {
            return Err(Error::invalid("lifetimes", "must all be > 0"));
        }
        Ok(PopulationLifetimes { t1, tb, tz })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.t1, self.tb, self.tz]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub bohr_magneton: f64,
    pub boltzmann: f64,
}

/// CODATA 2018.
pub const CODATA: PhysicalConstants = PhysicalConstants {
    bohr_magneton: 9.274_010_078_3e-24,
    boltzmann: 1.380_649e-23,
};

impl Default for PhysicalConstants {
    fn default() -> Self {
        CODATA
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tm_ygg_is_valid() {
        let model = MaterialModel::tm_ygg();
        assert_eq!(model.validate(), vec![]);
        assert_eq!(model.t1_excited, 1.99e-3);
        assert_eq!(model.t_bottleneck, 55.14e-3);
    }

    #[test]
    fn zero_t1_reported() {
        let mut model = MaterialModel::tm_ygg();
        model.t1_excited = 0.0;
        let v = model.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "t1_excited must be > 0");
    }

    #[test]
    fn duplicate_zeeman_fields_reported() {
        let mut model = MaterialModel::tm_ygg();
        model.zeeman_table[1].field = model.zeeman_table[0].field;
        let v: Vec<String> = model.validate().iter().map(|v| v.to_string()).collect();
        assert_eq!(v, vec!["zeeman_table not strictly increasing"]);
    }

    #[test]
    fn every_violation_is_collected() {
        let mut model = MaterialModel::tm_ygg();
        model.t_bottleneck = -1.0;
        model.subgroup_weights = [0.7, 0.7];
        model.inhomogeneous_bandwidth = 0.0;
        let fields: Vec<_> = model.validate().iter().map(|v| v.field).collect();
        assert_eq!(
            fields,
            vec!["t_bottleneck", "inhomogeneous_bandwidth", "subgroup_weights"]
        );
    }

    #[test]
    fn t1_must_be_shorter_than_bottleneck() {
        let mut model = MaterialModel::tm_ygg();
        model.t1_excited = 0.1;
        assert_eq!(model.validate()[0].rule, "must be < t_bottleneck");
    }

    #[test]
    fn parameter_constructors_check_invariants() {
        assert!(FieldPoint::new(-0.1, 0.5).is_err());
        assert!(FieldPoint::new(0.1, 0.0).is_err());
        assert!(SpectralDiffusionParams::new(0.0, 0.0, 1.0, 1.0, 1e-4).is_err());
        assert!(SpectralDiffusionParams::new(300.0, 0.0, 5820.0, 200.0, 160e-6).is_ok());
        assert!(PopulationAmplitudes::new(0.0, 0.0, 0.0).is_err());
        assert!(PopulationAmplitudes::new(1.0, 0.0, 0.0).is_ok());
    }
}
