//! Experiment descriptors: a flat `key = value` document with optional
//! `[section]` headers, dotted keys and unit-suffixed scalars.
//!
//! ```text
//! kind = 2ppe
//! seed = 7
//!
//! [echo]
//! t2 = 552us
//!
//! [noise]
//! sigma = 0.02
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::afc::{solve_peak_depth, CombSpec, Envelope, ToothShape};
use crate::coherence::ThreePulseSetup;
use crate::error::{Error, Result};
use crate::model::{
    FieldPoint, MaterialModel, PopulationAmplitudes, PopulationLifetimes, SpectralDiffusionParams,
};
use crate::noise::Noise;
use crate::population::{linear_grid, log_grid, zeeman_lifetime, Subgroup};
use crate::units::{parse_quantity, to_si, Dimension};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.key, self.reason),
            None => write!(f, "{}: {}", self.key, self.reason),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ExperimentKind {
    ShbDecay,
    TwoPulse,
    ThreePulse,
    HoleBroadening,
    AfcTemporal,
    AfcSpectral,
    Fit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ShbDecay,
        ExperimentKind::TwoPulse,
        ExperimentKind::ThreePulse,
        ExperimentKind::HoleBroadening,
        ExperimentKind::AfcTemporal,
        ExperimentKind::AfcSpectral,
        ExperimentKind::Fit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ShbDecay => "shb-decay",
            ExperimentKind::TwoPulse => "2ppe",
            ExperimentKind::ThreePulse => "3ppe",
            ExperimentKind::HoleBroadening => "hole-broadening",
            ExperimentKind::AfcTemporal => "afc-temporal",
            ExperimentKind::AfcSpectral => "afc-spectral",
            ExperimentKind::Fit => "fit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            log_grid(self.start, self.stop, self.points)
        } else {
            linear_grid(self.start, self.stop, self.points)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShbConfig {
    pub amplitudes: Vec<f64>,
    pub zeeman_lifetime: Option<f64>,
    /// Components of the fitted mixture.
    pub components: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPulseConfig {
    pub gamma_h: f64,
    pub i0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreePulseConfig {
    pub setup: ThreePulseSetup,
    pub float_amplitudes: bool,
    pub freeze_tls: bool,
    /// Hand the true I₀ to the fit.
    pub known_i0: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadeningConfig {
    /// Tesla.
    pub fields: Vec<f64>,
    pub gamma_sd: Vec<f64>,
    pub gamma0: f64,
    pub r_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseConfig {
    pub duration: f64,
    pub count: usize,
    pub period: f64,
    pub first: f64,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfcTemporalConfig {
    pub comb: CombSpec,
    pub resolution: f64,
    pub pulse: PulseConfig,
    pub dt: f64,
    pub window: f64,
    /// Monte-Carlo ensemble size for the dephasing check.
    pub dicke_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfcSpectralConfig {
    pub combs: Vec<CombSpec>,
    pub resolution: f64,
    pub pulse: PulseConfig,
    pub filter_fwhm: f64,
    pub shift_spacing: f64,
    pub dt: f64,
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FitModelKind {
    MultiExponential,
    TwoPulse,
    HoleWidth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Relative paths resolve against the config file's directory.
    pub input: PathBuf,
    pub model: FitModelKind,
    pub components: usize,
    pub offset: bool,
    /// Iteration cap per optimizer start.
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    ShbDecay(ShbConfig),
    TwoPulse(TwoPulseConfig),
    ThreePulse(ThreePulseConfig),
    HoleBroadening(BroadeningConfig),
    AfcTemporal(AfcTemporalConfig),
    AfcSpectral(AfcSpectralConfig),
    Fit(FitConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub material_name: String,
    pub material: MaterialModel,
    pub field: FieldPoint,
    /// Noise fraction; its form (additive or multiplicative) follows the kind.
    pub noise_sigma: f64,
    pub grid: Option<GridSpec>,
    pub output_dir: Option<PathBuf>,
    pub prefix: String,
    pub experiment: Experiment,
    /// The document exactly as given.
    pub text: String,
}

impl ExperimentConfig {
    /// Noise model used by the simulation for this kind.
    pub fn noise(&self) -> Noise {
        if self.noise_sigma == 0.0 {
            return Noise::None;
        }
        match self.kind {
            ExperimentKind::ShbDecay => Noise::Absolute(self.noise_sigma),
            _ => Noise::Relative(self.noise_sigma),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        self.noise_sigma > 0.0
            || matches!(self.experiment, Experiment::AfcTemporal(AfcTemporalConfig { dicke_samples: Some(_), .. }))
    }

    /// Seed for stochastic runs; zero when nothing is drawn.
    pub fn seed_or_zero(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

struct Entry {
    value: String,
    line: usize,
}

/// Raw key table plus the errors found so far; typed getters consume keys
/// so whatever remains at the end is unknown.
struct Reader {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn lex(text: &str) -> Reader {
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                match rest.strip_suffix(']').map(str::trim) {
                    Some(name) if valid_key(name) => section = format!("{name}."),
                    _ => errors.push(ConfigError {
                        line: Some(line),
                        key: content.to_string(),
                        reason: "malformed section header".into(),
                    }),
                }
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                errors.push(ConfigError {
                    line: Some(line),
                    key: content.to_string(),
                    reason: "expected `key = value`".into(),
                });
                continue;
            };
            let key = format!("{section}{}", k.trim());
            if !valid_key(&key) {
                errors.push(ConfigError { line: Some(line), key, reason: "invalid key".into() });
                continue;
            }
            let value = unquote(v.trim()).to_string();
            if let Some(prev) = entries.get(&key) {
                let prev: &Entry = prev;
                errors.push(ConfigError {
                    line: Some(line),
                    key,
                    reason: format!("duplicate key (first set on line {})", prev.line),
                });
                continue;
            }
            entries.insert(key, Entry { value, line });
        }
        Reader { entries, errors }
    }

    fn error(&mut self, line: Option<usize>, key: &str, reason: impl Into<String>) {
        self.errors.push(ConfigError { line, key: key.to_string(), reason: reason.into() });
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn missing(&mut self, key: &str) {
        self.error(None, key, "required key is missing");
    }

    fn string(&mut self, key: &str) -> Option<(String, usize)> {
        self.take(key).map(|e| (e.value, e.line))
    }

    fn parse_scalar(&mut self, key: &str, e: &Entry, dim: Dimension) -> Option<f64> {
        match parse_quantity(&e.value) {
            Ok((v, None)) => Some(v),
            Ok((v, Some(u))) if u.dimension() == dim => Some(to_si(v, u)),
            Ok((_, Some(u))) => {
                self.error(Some(e.line), key, format!("unit `{u}` is not a {}", dim_name(dim)));
                None
            }
            Err(err) => {
                self.error(Some(e.line), key, err.to_string());
                None
            }
        }
    }

    /// SI value; bare numbers are taken as SI already.
    fn quantity(&mut self, key: &str, dim: Dimension) -> Option<f64> {
        let e = self.take(key)?;
        self.parse_scalar(key, &e, dim)
    }

    fn required(&mut self, key: &str, dim: Dimension) -> Option<f64> {
        match self.take(key) {
            Some(e) => self.parse_scalar(key, &e, dim),
            None => {
                self.missing(key);
                None
            }
        }
    }

    fn positive(&mut self, key: &str, dim: Dimension, default: Option<f64>) -> Option<f64> {
        let line = self.entries.get(key).map(|e| e.line);
        let v = match default {
            Some(d) => self.quantity(key, dim).or(line.is_none().then_some(d)),
            None => self.required(key, dim),
        }?;
        if !(v > 0.0) {
            self.error(line, key, "must be > 0");
            return None;
        }
        Some(v)
    }

    fn non_negative(&mut self, key: &str, dim: Dimension, default: f64) -> Option<f64> {
        let line = self.entries.get(key).map(|e| e.line);
        let v = if line.is_some() { self.quantity(key, dim)? } else { default };
        if !(v >= 0.0) {
            self.error(line, key, "must be >= 0");
            return None;
        }
        Some(v)
    }

    fn list(&mut self, key: &str, dim: Dimension, required: bool) -> Option<Vec<f64>> {
        let Some(e) = self.take(key) else {
            if required {
                self.missing(key);
            }
            return None;
        };
        let mut out = Vec::new();
        for item in e.value.split(',') {
            let item = Entry { value: item.trim().to_string(), line: e.line };
            out.push(self.parse_scalar(key, &item, dim)?);
        }
        Some(out)
    }

    fn integer(&mut self, key: &str, default: Option<u64>) -> Option<u64> {
        match self.take(key) {
            Some(e) => match e.value.parse::<u64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.error(Some(e.line), key, format!("`{}` is not a non-negative integer", e.value));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.missing(key);
                }
                default
            }
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> Option<bool> {
        match self.take(key) {
            Some(e) => match e.value.as_str() {
                "true" | "yes" | "on" => Some(true),
                "false" | "no" | "off" => Some(false),
                other => {
                    self.error(Some(e.line), key, format!("`{other}` is not a boolean"));
                    None
                }
            },
            None => Some(default),
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)], default: Option<T>) -> Option<T> {
        match self.take(key) {
            Some(e) => match options.iter().find(|(n, _)| *n == e.value) {
                Some((_, v)) => Some(*v),
                None => {
                    let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                    self.error(Some(e.line), key, format!("`{}` is not one of {}", e.value, names.join(", ")));
                    None
                }
            },
            None => {
                if default.is_none() {
                    self.missing(key);
                }
                default
            }
        }
    }

    fn finish(mut self) -> Vec<ConfigError> {
        let leftover: Vec<(String, usize)> =
            self.entries.iter().map(|(k, e)| (k.clone(), e.line)).collect();
        for (k, line) in leftover {
            self.error(Some(line), &k, "unknown key");
        }
        self.errors.sort_by_key(|e| (e.line.unwrap_or(usize::MAX), e.key.clone()));
        self.errors
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.split('.').all(|part| {
            !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        })
}

fn dim_name(d: Dimension) -> &'static str {
    match d {
        Dimension::Time => "time",
        Dimension::Frequency => "frequency",
        Dimension::MagneticField => "magnetic field",
        Dimension::Temperature => "temperature",
        Dimension::Dimensionless => "pure number",
    }
}

fn grid(r: &mut Reader, default: GridSpec) -> Option<GridSpec> {
    let spacing = r.choice("grid.spacing", &[("log", true), ("linear", false)], Some(default.log))?;
    let start_line = r.entries.get("grid.start").map(|e| e.line);
    let start = r.non_negative("grid.start", Dimension::Time, default.start);
    let stop = r.positive("grid.stop", Dimension::Time, Some(default.stop));
    let points = r.integer("grid.points", Some(default.points as u64));
    let (start, stop, points) = (start?, stop?, points?);
    if !(stop > start) {
        r.error(start_line, "grid.start", "must be below grid.stop");
        return None;
    }
    if points < 2 {
        r.error(None, "grid.points", "need at least 2 points");
        return None;
    }
    if spacing && start <= 0.0 {
        r.error(start_line, "grid.start", "log spacing needs a start > 0");
        return None;
    }
    Some(GridSpec { start, stop, points: points as usize, log: spacing })
}

const SHAPES: [(&str, ToothShape); 2] = [("gaussian", ToothShape::Gaussian), ("square", ToothShape::Square)];
const ENVELOPES: [(&str, Envelope); 2] = [("square", Envelope::Square), ("gaussian", Envelope::Gaussian)];

struct CombCommon {
    finesse: f64,
    d1: f64,
    d0: f64,
    bandwidth: f64,
    shape: ToothShape,
}

fn comb_common(r: &mut Reader) -> Option<CombCommon> {
    let finesse = r.positive("comb.finesse", Dimension::Dimensionless, None);
    let d0 = r.non_negative("comb.background", Dimension::Dimensionless, 0.0);
    let bandwidth = r.positive("comb.bandwidth", Dimension::Frequency, None);
    let shape = r.choice("comb.shape", &SHAPES, Some(ToothShape::Gaussian));
    let depth_line = r.entries.get("comb.peak_depth").map(|e| e.line);
    let eta_line = r.entries.get("comb.efficiency").map(|e| e.line);
    let d1 = r.quantity("comb.peak_depth", Dimension::Dimensionless);
    let eta = r.quantity("comb.efficiency", Dimension::Dimensionless);
    let (finesse, d0) = (finesse?, d0?);
    let d1 = match (d1, eta, depth_line, eta_line) {
        (Some(d1), None, _, None) if d1 > 0.0 => d1,
        (Some(_), None, line, None) => {
            r.error(line, "comb.peak_depth", "must be > 0");
            return None;
        }
        (None, Some(eta), None, line) => match solve_peak_depth(eta, finesse, d0) {
            Ok(d1) => d1,
            Err(e) => {
                r.error(line, "comb.efficiency", e.to_string());
                return None;
            }
        },
        (_, _, Some(_), Some(line)) => {
            r.error(Some(line), "comb.efficiency", "give either comb.peak_depth or comb.efficiency, not both");
            return None;
        }
        (None, None, None, None) => {
            r.error(None, "comb.peak_depth", "required key is missing (or give comb.efficiency)");
            return None;
        }
        _ => return None,
    };
    Some(CombCommon { finesse, d1, d0, bandwidth: bandwidth?, shape: shape? })
}

fn pulses(r: &mut Reader) -> Option<PulseConfig> {
    let duration = r.positive("pulse.duration", Dimension::Time, None);
    let count = r.integer("pulse.count", Some(1));
    let envelope = r.choice("pulse.envelope", &ENVELOPES, Some(Envelope::Square));
    let period_line = r.entries.get("pulse.period").map(|e| e.line);
    let period = r.quantity("pulse.period", Dimension::Time);
    let first = r.quantity("pulse.first", Dimension::Time);
    let (duration, count, envelope) = (duration?, count?, envelope?);
    if count == 0 {
        r.error(None, "pulse.count", "must be >= 1");
        return None;
    }
    let period = match (count, period) {
        (1, p) => p.unwrap_or(0.0),
        (_, Some(p)) if p > 0.0 => p,
        (_, Some(_)) => {
            r.error(period_line, "pulse.period", "must be > 0");
            return None;
        }
        (_, None) => {
            r.error(None, "pulse.period", "required when pulse.count > 1");
            return None;
        }
    };
    let first = first.unwrap_or(envelope.reach(duration) + duration);
    Some(PulseConfig { duration, count: count as usize, period, first, envelope })
}

impl PulseConfig {
    pub fn end(&self) -> f64 {
        self.first + (self.count - 1) as f64 * self.period + self.envelope.reach(self.duration)
    }
}

/// (dt, window) with defaults that satisfy the sampling and window checks.
fn sampling(r: &mut Reader, pulse: &PulseConfig, bandwidth: f64, storage: f64) -> Option<(f64, f64)> {
    let dt = r.positive("sim.dt", Dimension::Time, Some((pulse.duration / 20.0).min(0.125 / bandwidth)));
    let window = r.positive("sim.window", Dimension::Time, Some(pulse.end() + 2.5 * storage));
    Some((dt?, window?))
}

/// Parses and validates a config document, reporting every problem at once.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with_seed(text, None)
}

/// As [`parse_config`], with a seed that overrides the document's.
pub fn parse_config_with_seed(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let mut r = Reader::lex(text);
    let kind = match r.string("kind") {
        Some((v, line)) => match ExperimentKind::from_name(&v) {
            Some(k) => Some(k),
            None => {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                r.error(Some(line), "kind", format!("`{v}` is not one of {}", names.join(", ")));
                None
            }
        },
        None => {
            r.missing("kind");
            None
        }
    };
    let seed = r.integer("seed", Some(u64::MAX)).filter(|s| *s != u64::MAX);
    let seed = seed_override.or(seed);
    let material_name = match r.string("material") {
        None => Some("tm_ygg".to_string()),
        Some((v, _)) if v == "tm_ygg" => Some(v),
        Some((v, line)) => {
            r.error(Some(line), "material", format!("unknown material `{v}`"));
            None
        }
    };
    let material = MaterialModel::tm_ygg();
    let b = r.quantity("field.b", Dimension::MagneticField).unwrap_or(0.0);
    let temp_line = r.entries.get("field.temperature").map(|e| e.line);
    let temperature = r.positive("field.temperature", Dimension::Temperature, Some(0.6));
    let field = temperature.and_then(|t| match FieldPoint::new(b, t) {
        Ok(f) => Some(f),
        Err(e) => {
            r.error(temp_line, "field", e.to_string());
            None
        }
    });
    let noise_sigma = r.non_negative("noise.sigma", Dimension::Dimensionless, 0.0);
    let output_dir = r.string("output.dir").map(|(v, _)| PathBuf::from(v));
    let prefix = r.string("output.prefix").map(|(v, _)| v);

    let Some(kind) = kind else {
        return Err(Error::Config(r.finish()));
    };
    let mut grid_spec = None;
    let experiment = match kind {
        ExperimentKind::ShbDecay => {
            let g = grid(&mut r, GridSpec { start: 10e-6, stop: 0.3, points: 50, log: true });
            let zl = r.quantity("shb.zeeman_lifetime", Dimension::Time);
            let default = if zl.is_some() { vec![0.4, 0.4, 0.2] } else { vec![0.5, 0.5] };
            let amps_line = r.entries.get("shb.amplitudes").map(|e| e.line);
            let amps = r.list("shb.amplitudes", Dimension::Dimensionless, false).unwrap_or(default);
            let components = r.integer("fit.components", Some(amps.len() as u64));
            grid_spec = g;
            if amps.len() != 2 + usize::from(zl.is_some()) {
                r.error(amps_line, "shb.amplitudes", "need one amplitude per lifetime (2, or 3 with shb.zeeman_lifetime)");
            }
            if amps.iter().any(|a| !(*a >= 0.0)) {
                r.error(amps_line, "shb.amplitudes", "must be >= 0");
            }
            if matches!(zl, Some(t) if !(t > 0.0)) {
                r.error(None, "shb.zeeman_lifetime", "must be > 0");
            }
            components.map(|c| {
                Experiment::ShbDecay(ShbConfig { amplitudes: amps, zeeman_lifetime: zl, components: c as usize })
            })
        }
        ExperimentKind::TwoPulse => {
            grid_spec = grid(&mut r, GridSpec { start: 0.0, stop: 1.5e-3, points: 30, log: false });
            let t2_line = r.entries.get("echo.t2").map(|e| e.line);
            let given = t2_line.is_some() || r.entries.contains_key("echo.gamma_h");
            let t2 = r.quantity("echo.t2", Dimension::Time);
            let gh = r.quantity("echo.gamma_h", Dimension::Frequency);
            let i0 = r.positive("echo.i0", Dimension::Dimensionless, Some(1.0));
            let gamma_h = match (t2, gh) {
                (Some(t2), None) if t2 > 0.0 => Some(1.0 / (std::f64::consts::PI * t2)),
                (None, Some(g)) if g > 0.0 => Some(g),
                (None, None) => {
                    if !given {
                        r.error(None, "echo.t2", "required key is missing (or give echo.gamma_h)");
                    }
                    None
                }
                (Some(_), Some(_)) => {
                    r.error(t2_line, "echo.t2", "give either echo.t2 or echo.gamma_h, not both");
                    None
                }
                _ => {
                    r.error(t2_line, "echo", "linewidth must be > 0");
                    None
                }
            };
            gamma_h.zip(i0).map(|(gamma_h, i0)| Experiment::TwoPulse(TwoPulseConfig { gamma_h, i0 }))
        }
        ExperimentKind::ThreePulse => {
            let g = grid(&mut r, GridSpec { start: 160e-6, stop: 0.1, points: 40, log: true });
            let t12 = r.positive("echo.t12", Dimension::Time, Some(60e-6));
            let i0 = r.positive("echo.i0", Dimension::Dimensionless, Some(1.0));
            let gamma0 = r.positive("diffusion.gamma0", Dimension::Frequency, None);
            let tls = r.non_negative("diffusion.gamma_tls", Dimension::Frequency, 0.0);
            let gsd = r.non_negative("diffusion.gamma_sd", Dimension::Frequency, f64::NAN);
            if gsd.is_some_and(f64::is_nan) {
                r.missing("diffusion.gamma_sd");
            }
            let rsd = r.positive("diffusion.r_sd", Dimension::Frequency, None);
            let t0 = r.positive("diffusion.t0", Dimension::Time, g.map(|g| g.start).or(Some(160e-6)));
            let c1 = r.non_negative("population.c1", Dimension::Dimensionless, 1.0 / 3.0);
            let cb = r.non_negative("population.cb", Dimension::Dimensionless, 1.0 / 3.0);
            let cz = r.non_negative("population.cz", Dimension::Dimensionless, 1.0 / 3.0);
            let t1 = r.positive("population.t1", Dimension::Time, Some(material.t1_excited));
            let tb = r.positive("population.tb", Dimension::Time, Some(material.t_bottleneck));
            let tz_default = zeeman_lifetime(b, Subgroup::Long, &material).ok();
            let tz = r.positive("population.tz", Dimension::Time, tz_default);
            let float = r.choice("fit.amplitudes", &[("floated", true), ("fixed", false)], Some(true));
            let freeze = r.boolean("fit.freeze_tls", true);
            let known = r.boolean("fit.known_i0", false);
            grid_spec = g;
            let amplitudes = match (c1, cb, cz) {
                (Some(c1), Some(cb), Some(cz)) => PopulationAmplitudes::new(c1, cb, cz)
                    .map_err(|e| r.error(None, "population", e.to_string()))
                    .ok(),
                _ => None,
            };
            let lifetimes = match (t1, tb, tz) {
                (Some(t1), Some(tb), Some(tz)) => PopulationLifetimes::new(t1, tb, tz).ok(),
                _ => None,
            };
            let diffusion = match (gamma0, tls, gsd.filter(|v| !v.is_nan()), rsd, t0) {
                (Some(g0), Some(tls), Some(gsd), Some(rsd), Some(t0)) => {
                    SpectralDiffusionParams::new(g0, tls, gsd, rsd, t0)
                        .map_err(|e| r.error(None, "diffusion", e.to_string()))
                        .ok()
                }
                _ => None,
            };
            let built = match (amplitudes, lifetimes, diffusion, t12, i0) {
                (Some(amplitudes), Some(lifetimes), Some(diffusion), Some(t12), Some(i0)) => {
                    Some(ThreePulseSetup { t12, amplitudes, lifetimes, diffusion, i0 })
                }
                _ => None,
            };
            if let (Some(g), Some(t0)) = (g, t0) {
                if g.start < t0 {
                    r.error(None, "diffusion.t0", "must not exceed grid.start");
                }
            }
            match (built, float, freeze, known) {
                (Some(setup), Some(f), Some(z), Some(k)) => Some(Experiment::ThreePulse(ThreePulseConfig {
                    setup,
                    float_amplitudes: f,
                    freeze_tls: z,
                    known_i0: k,
                })),
                _ => None,
            }
        }
        ExperimentKind::HoleBroadening => {
            grid_spec = grid(&mut r, GridSpec { start: 0.0, stop: 500.0, points: 26, log: false });
            let fields = r.list("sweep.fields", Dimension::MagneticField, true);
            let gsd = r.list("sweep.gamma_sd", Dimension::Frequency, true);
            let gamma0 = r.positive("diffusion.gamma0", Dimension::Frequency, None);
            let rsd = r.positive("diffusion.r_sd", Dimension::Frequency, None);
            match (fields, gsd, gamma0, rsd) {
                (Some(f), Some(g), Some(gamma0), Some(r_sd)) => {
                    if f.len() != g.len() {
                        r.error(None, "sweep.gamma_sd", "need one value per field");
                    }
                    if g.iter().any(|v| !(*v >= 0.0)) {
                        r.error(None, "sweep.gamma_sd", "must be >= 0");
                    }
                    Some(Experiment::HoleBroadening(BroadeningConfig { fields: f, gamma_sd: g, gamma0, r_sd }))
                }
                _ => None,
            }
        }
        ExperimentKind::AfcTemporal => {
            let delta = r.positive("comb.spacing", Dimension::Frequency, None);
            let common = comb_common(&mut r);
            let res = r.quantity("comb.resolution", Dimension::Frequency);
            let p = pulses(&mut r);
            let dicke = r.integer("dicke.samples", Some(u64::MAX)).filter(|n| *n != u64::MAX);
            match (delta, common, p) {
                (Some(delta), Some(c), Some(pulse)) => {
                    let spec = CombSpec::new(delta, c.finesse, c.d1, c.d0, c.bandwidth, 0.0, c.shape);
                    let s = sampling(&mut r, &pulse, c.bandwidth, 1.0 / delta);
                    match (spec, s) {
                        (Ok(comb), Some((dt, window))) => Some(Experiment::AfcTemporal(AfcTemporalConfig {
                            comb,
                            resolution: res.unwrap_or(comb.tooth_fwhm() / 10.0),
                            pulse,
                            dt,
                            window,
                            dicke_samples: dicke.map(|n| n as usize),
                        })),
                        (Err(e), _) => {
                            r.error(None, "comb", e.to_string());
                            None
                        }
                        _ => None,
                    }
                }
                _ => None,
            }
        }
        ExperimentKind::AfcSpectral => {
            let centers = r.list("channels.centers", Dimension::Frequency, true);
            let storage = r.list("channels.storage", Dimension::Time, true);
            let common = comb_common(&mut r);
            let res = r.quantity("comb.resolution", Dimension::Frequency);
            let p = pulses(&mut r);
            let fwhm = r.positive("filter.fwhm", Dimension::Frequency, None);
            let shift = r.quantity("shift.spacing", Dimension::Frequency);
            match (centers, storage, common, p, fwhm) {
                (Some(centers), Some(storage), Some(c), Some(pulse), Some(filter_fwhm)) => {
                    if centers.len() != storage.len() || centers.is_empty() {
                        r.error(None, "channels.storage", "need one storage time per channel centre");
                        None
                    } else if storage.iter().any(|t| !(*t > 0.0)) {
                        r.error(None, "channels.storage", "must be > 0");
                        None
                    } else {
                        let combs: Result<Vec<CombSpec>> = centers
                            .iter()
                            .zip(&storage)
                            .map(|(&f, &t)| CombSpec::new(1.0 / t, c.finesse, c.d1, c.d0, c.bandwidth, f, c.shape))
                            .collect();
                        let t_max = storage.iter().copied().fold(0.0, f64::max);
                        let (lo, hi) = centers.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &f| (a.min(f), b.max(f)));
                        let s = sampling(&mut r, &pulse, hi - lo + c.bandwidth, t_max);
                        let shift_spacing = shift.unwrap_or(if centers.len() > 1 { centers[1] - centers[0] } else { 0.0 });
                        match (combs, s) {
                            (Ok(combs), Some((dt, window))) => {
                                let fine = combs.iter().map(|c| c.tooth_fwhm()).fold(f64::INFINITY, f64::min);
                                Some(Experiment::AfcSpectral(AfcSpectralConfig {
                                    combs,
                                    resolution: res.unwrap_or(fine / 10.0),
                                    pulse,
                                    filter_fwhm,
                                    shift_spacing,
                                    dt,
                                    window,
                                }))
                            }
                            (Err(e), _) => {
                                r.error(None, "comb", e.to_string());
                                None
                            }
                            _ => None,
                        }
                    }
                }
                _ => None,
            }
        }
        ExperimentKind::Fit => {
            let input = r.string("fit.input");
            if input.is_none() {
                r.missing("fit.input");
            }
            let model = r.choice(
                "fit.model",
                &[
                    ("multiexponential", FitModelKind::MultiExponential),
                    ("two_pulse", FitModelKind::TwoPulse),
                    ("hole_width", FitModelKind::HoleWidth),
                ],
                None,
            );
            let components = r.integer("fit.components", Some(2));
            let offset = r.boolean("fit.offset", false);
            let default_iter = crate::fitting::LmConfig::default().max_iter as u64;
            let max_iter = match r.integer("fit.max_iterations", Some(default_iter)) {
                Some(0) => {
                    r.error(None, "fit.max_iterations", "must be >= 1");
                    None
                }
                other => other,
            };
            match (input, model, components, offset, max_iter) {
                (Some((input, _)), Some(model), Some(c), Some(offset), Some(max_iter)) => Some(Experiment::Fit(FitConfig {
                    input: PathBuf::from(input),
                    model,
                    components: c as usize,
                    offset,
                    max_iterations: max_iter as usize,
                })),
                _ => None,
            }
        }
    };

    let noisy = noise_sigma.is_some_and(|s| s > 0.0)
        || matches!(experiment, Some(Experiment::AfcTemporal(AfcTemporalConfig { dicke_samples: Some(_), .. })));
    if noisy && seed.is_none() {
        r.error(None, "seed", "required for stochastic runs (noise or Monte-Carlo sampling)");
    }
    let errors = r.finish();
    match (experiment, field, noise_sigma, material_name) {
        (Some(experiment), Some(field), Some(noise_sigma), Some(material_name)) if errors.is_empty() => {
            Ok(ExperimentConfig {
                kind,
                seed,
                material_name,
                material,
                field,
                noise_sigma,
                grid: grid_spec,
                output_dir,
                prefix: prefix.unwrap_or_else(|| kind.name().to_string()),
                experiment,
                text: text.to_string(),
            })
        }
        _ if errors.is_empty() => Err(Error::Config(vec![ConfigError {
            line: None,
            key: kind.name().to_string(),
            reason: "invalid configuration".into(),
        }])),
        _ => Err(Error::Config(errors)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn errors(text: &str) -> Vec<ConfigError> {
        match parse_config(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_two_pulse_fills_defaults() {
        let c = parse_config("kind = 2ppe\necho.t2 = 552us\n").unwrap();
        let Experiment::TwoPulse(tp) = c.experiment else { panic!() };
        assert!((tp.gamma_h - 576.6483445358527).abs() < 1e-9);
        assert_eq!(tp.i0, 1.0);
        assert_eq!(c.noise(), Noise::None);
        assert_eq!(c.grid.unwrap().points, 30);
        assert_eq!(c.prefix, "2ppe");
        assert_eq!(c.field.temperature, 0.6);
    }

    #[test]
    fn noisy_run_without_seed_names_seed() {
        let e = errors("kind = 2ppe\necho.t2 = 552us\nnoise.sigma = 0.02\n");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].key, "seed");
        let ok = parse_config_with_seed("kind = 2ppe\necho.t2 = 552us\nnoise.sigma = 0.02\n", Some(3)).unwrap();
        assert_eq!(ok.seed, Some(3));
    }

    #[test]
    fn unit_suffixes_convert_to_si() {
        let text = "kind = 3ppe\n[echo]\nt12 = 60us\n[field]\nb = 200G\n[diffusion]\ngamma0 = 300Hz\ngamma_sd = 5.82kHz\nr_sd = 0.2kHz\n";
        let c = parse_config(text).unwrap();
        assert!((c.field.b_field - 0.02).abs() < 1e-15);
        let Experiment::ThreePulse(t) = c.experiment else { panic!() };
        assert!((t.setup.t12 - 60e-6).abs() < 1e-18);
        assert!((t.setup.diffusion.gamma_sd - 5820.0).abs() < 1e-9);
        assert!((t.setup.diffusion.r_sd - 200.0).abs() < 1e-12);
    }

    #[test]
    fn all_errors_reported_with_lines() {
        let text = "kind = 2ppe\necho.t2 = 5 kG\nbogus = 1\ngrid.points = x\nnot a pair\n";
        let e = errors(text);
        let lines: Vec<Option<usize>> = e.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![Some(2), Some(3), Some(4), Some(5)], "{e:?}");
        assert_eq!(e[1].key, "bogus");
    }

    #[test]
    fn wrong_dimension_rejected() {
        let e = errors("kind = 2ppe\necho.t2 = 552kHz\n");
        assert!(e[0].reason.contains("time"));
    }

    #[test]
    fn duplicate_and_unknown_kind() {
        let e = errors("kind = 2ppe\nkind = 3ppe\necho.t2 = 1ms\n");
        assert!(e[0].reason.contains("duplicate"));
        let e = errors("kind = 4ppe\n");
        assert_eq!(e[0].key, "kind");
    }

    #[test]
    fn efficiency_back_solves_depth() {
        let text = "kind = afc-temporal\ncomb.spacing = 200kHz\ncomb.finesse = 2\ncomb.background = 0.2\n\
                    comb.efficiency = 0.0098\ncomb.bandwidth = 10MHz\npulse.duration = 200ns\n";
        let c = parse_config(text).unwrap();
        let Experiment::AfcTemporal(a) = c.experiment else { panic!() };
        assert!((crate::afc::analytic_efficiency(&a.comb) - 0.0098).abs() < 1e-9);
        assert!(a.dt <= 0.125 / 10e6);
        assert!(a.window >= a.pulse.end() + 2.0 / 200e3);
    }

    #[test]
    fn sections_and_comments() {
        let text = "# header\nkind = \"2ppe\"  # trailing\n\n[echo]\nt2 = 1ms\n[grid]\nspacing = log\nstart = 10us\n";
        let c = parse_config(text).unwrap();
        assert!(c.grid.unwrap().log);
    }

    fn valid_configs() -> Vec<&'static str> {
        vec![
            "kind = 2ppe\necho.t2 = 552us\n",
            "kind = shb-decay\n",
            "kind = hole-broadening\nsweep.fields = 1kG, 2kG\nsweep.gamma_sd = 36kHz, 50kHz\ndiffusion.gamma0 = 20kHz\ndiffusion.r_sd = 0.01Hz\n",
        ]
    }

    proptest! {
        #[test]
        fn injected_junk_key_is_reported(which in 0usize..3, key in "x_[a-z]{1,8}(\\.[a-z_]{1,8})?", at in 0usize..4) {
            let base = valid_configs()[which];
            prop_assert!(parse_config(base).is_ok());
            let mut lines: Vec<&str> = base.lines().collect();
            let junk = format!("{key} = 1");
            let pos = at.min(lines.len());
            lines.insert(pos, &junk);
            let text = lines.join("\n");
            match parse_config(&text) {
                Err(Error::Config(e)) => prop_assert!(e.iter().any(|e| e.line == Some(pos + 1))),
                Ok(_) => prop_assert!(false, "junk key `{key}` accepted"),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn parsing_is_total(text in "\\PC{0,200}") {
            let _ = parse_config(&text);
        }
    }
}
