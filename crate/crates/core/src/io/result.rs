use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::trace_csv::write_atomic;
use crate::error::Result;
use crate::fitting::FitResult;

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A derived number reported by a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Everything one CLI invocation produced. Field order is the key order of
/// the serialized document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDocument {
    pub generator: String,
    pub version: String,
    pub command: String,
    pub kind: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub converged: bool,
    pub quantities: Vec<Quantity>,
    pub fits: Vec<FitResult>,
    /// Paths of trace and plot files, relative to the output directory.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_clock_seconds: f64,
    /// The config document, verbatim.
    pub config: String,
}

impl ResultDocument {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        ResultDocument {
            generator: "reqm-sim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            kind: config.kind.name().into(),
            config_sha256: config_hash(&config.text),
            seed: config.seed,
            converged: true,
            quantities: Vec::new(),
            fits: Vec::new(),
            files: Vec::new(),
            warnings: Vec::new(),
            wall_clock_seconds: 0.0,
            config: config.text.clone(),
        }
    }

    pub fn quantity(&mut self, name: &str, value: f64, unit: &str) {
        self.quantities.push(Quantity { name: name.into(), value, unit: unit.into() });
    }

    pub fn add_fit(&mut self, fit: FitResult) {
        self.converged &= fit.converged;
        self.warnings.extend(fit.warnings.iter().map(|w| format!("{}: {w}", fit.model)));
        self.fits.push(fit);
    }

    /// Pretty JSON; infinite uncertainties appear as `null`.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}
