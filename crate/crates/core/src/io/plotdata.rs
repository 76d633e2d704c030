//! Column files for plotting: measured points and fitted curves are separate
//! series so either can be drawn as markers or lines.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::trace_csv::{write_atomic, GENERATOR};
use crate::afc::{CombProfile, MultimodeOutput, Propagation};
use crate::error::Result;
use crate::fitting::{FitResult, HoleBroadeningFit, ThreePulseFit};
use crate::trace::TimeTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFile {
    /// File name without directory, e.g. `hole_decay_points.csv`.
    pub name: String,
    pub panel: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotFile {
    fn new(name: &str, panel: &str, columns: &[&str]) -> Self {
        PlotFile {
            name: name.into(),
            panel: panel.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn format(&self, config_sha256: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# columns: {}", self.columns.join(","));
        let _ = writeln!(out, "# meta panel={}", self.panel);
        let _ = writeln!(out, "# meta rows={}", self.rows.len());
        let _ = writeln!(out, "# meta generator={GENERATOR}");
        let _ = writeln!(out, "# meta config_sha256={config_sha256}");
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Writes every file into `dir` in the given order; returns their paths.
pub fn emit_plotdata(files: &[PlotFile], dir: &Path, config_sha256: &str) -> Result<Vec<PathBuf>> {
    files
        .iter()
        .map(|f| {
            let path = dir.join(&f.name);
            write_atomic(&path, f.format(config_sha256).as_bytes())?;
            Ok(path)
        })
        .collect()
}

fn curve_grid(t: &[f64], n: usize) -> Vec<f64> {
    let (lo, hi) = (t[0], t[t.len() - 1]);
    if lo > 0.0 && hi / lo > 100.0 {
        (0..n).map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp()).collect()
    } else {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

fn points(name: &str, panel: &str, cols: &[&str], trace: &TimeTrace) -> PlotFile {
    let mut f = PlotFile::new(name, panel, cols);
    f.rows = trace.times().into_iter().zip(trace.samples()).map(|(t, v)| vec![t, *v]).collect();
    f
}

/// Hole area points and the fitted exponential mixture.
pub fn hole_decay(trace: &TimeTrace, fit: &FitResult) -> Vec<PlotFile> {
    let mut curve = PlotFile::new("hole_decay_fit.csv", "hole decay", &["t_seconds", "area_fit"]);
    let n = (0..).take_while(|k| fit.get(&format!("lifetime_{}", k + 1)).is_some()).count();
    let offset = fit.get("offset").map_or(0.0, |e| e.value);
    for t in curve_grid(&trace.times(), 200) {
        let y: f64 = (1..=n)
            .map(|k| fit.value(&format!("amplitude_{k}")) * (-t / fit.value(&format!("lifetime_{k}"))).exp())
            .sum();
        curve.rows.push(vec![t, y + offset]);
    }
    vec![points("hole_decay_points.csv", "hole decay", &["t_seconds", "area"], trace), curve]
}

/// Echo intensity versus t₁₂ and the fitted decay.
pub fn two_pulse_decay(t12: &[f64], intensity: &[f64], fit: &FitResult) -> Vec<PlotFile> {
    let mut pts = PlotFile::new("echo_2ppe_points.csv", "two-pulse decay", &["t12_seconds", "intensity"]);
    pts.rows = t12.iter().zip(intensity).map(|(t, v)| vec![*t, *v]).collect();
    let mut curve = PlotFile::new("echo_2ppe_fit.csv", "two-pulse decay", &["t12_seconds", "intensity_fit"]);
    let (g, i0) = (fit.value("gamma_h"), fit.value("i0"));
    for t in curve_grid(t12, 200) {
        curve.rows.push(vec![t, i0 * (-4.0 * std::f64::consts::PI * g * t).exp()]);
    }
    vec![pts, curve]
}

/// T₂ at each field with its uncertainty.
pub fn t2_vs_field(fields: &[f64], fits: &[FitResult]) -> PlotFile {
    let mut f = PlotFile::new("t2_vs_field.csv", "T2 vs B", &["b_tesla", "t2_seconds", "t2_sigma_seconds"]);
    f.rows = fields.iter().zip(fits).map(|(b, r)| vec![*b, r.value("t2"), r.uncertainty("t2")]).collect();
    f
}

/// Extracted Γ_eff points and the fitted effective-linewidth curve.
pub fn effective_linewidth(fit: &ThreePulseFit) -> Vec<PlotFile> {
    let mut pts = PlotFile::new(
        "gamma_eff_points.csv",
        "effective linewidth",
        &["t12_seconds", "t23_seconds", "gamma_eff_hz"],
    );
    pts.rows = fit.points.iter().map(|p| vec![p.t12, p.t23, p.gamma_eff]).collect();
    let mut curve = PlotFile::new(
        "gamma_eff_fit.csv",
        "effective linewidth",
        &["t12_seconds", "t23_seconds", "gamma_eff_fit_hz"],
    );
    let mut t12s: Vec<f64> = fit.points.iter().map(|p| p.t12).collect();
    t12s.sort_by(f64::total_cmp);
    t12s.dedup();
    let t23: Vec<f64> = fit.points.iter().map(|p| p.t23).collect();
    let mut sorted = t23.clone();
    sorted.sort_by(f64::total_cmp);
    let grid = curve_grid(&sorted, 200);
    for t12 in t12s {
        for (t, g) in grid.iter().zip(fit.curve(t12, &grid)) {
            curve.rows.push(vec![t12, *t, g]);
        }
    }
    vec![pts, curve]
}

/// Per-field width points and fits, then Γ_SD(B) and R_SD(B).
pub fn hole_broadening(widths: &[TimeTrace], fit: &HoleBroadeningFit) -> Vec<PlotFile> {
    let mut pts = PlotFile::new("hole_width_points.csv", "hole width vs t", &["b_tesla", "t_seconds", "width_hz"]);
    let mut curve = PlotFile::new("hole_width_fit.csv", "hole width vs t", &["b_tesla", "t_seconds", "width_fit_hz"]);
    for ((w, r), &b) in widths.iter().zip(&fit.per_field).zip(&fit.fields) {
        for (t, v) in w.times().into_iter().zip(w.samples()) {
            pts.rows.push(vec![b, t, *v]);
        }
        let (w0, gsd, rate) = (r.value("width0"), r.value("gamma_sd"), r.value("r_sd"));
        for t in curve_grid(&w.times(), 100) {
            curve.rows.push(vec![b, t, w0 - gsd * (-rate * t).exp_m1()]);
        }
    }
    let mut gsd = PlotFile::new("gamma_sd_vs_field.csv", "Gamma_SD vs B", &["b_tesla", "gamma_sd_hz", "sigma_hz"]);
    let mut rsd = PlotFile::new("r_sd_vs_field.csv", "R_SD vs B", &["b_tesla", "r_sd_hz", "sigma_hz"]);
    for i in 0..fit.fields.len() {
        gsd.rows.push(vec![fit.fields[i], fit.gamma_sd[i], fit.gamma_sd_sigma[i]]);
        rsd.rows.push(vec![fit.fields[i], fit.r_sd[i], fit.r_sd_sigma[i]]);
    }
    vec![pts, curve, gsd, rsd]
}

/// Input and output intensity on one time axis: the transmitted train and
/// the echo train appear together in the output column.
pub fn afc_traces(p: &Propagation) -> PlotFile {
    let mut f = PlotFile::new("afc_traces.csv", "AFC input/output", &["t_seconds", "input_intensity", "output_intensity"]);
    f.rows = (0..p.len())
        .map(|i| vec![i as f64 * p.dt, p.input[i].norm_sqr(), p.output[i].norm_sqr()])
        .collect();
    f
}

pub fn comb_profile(profile: &CombProfile) -> PlotFile {
    let mut f = PlotFile::new("comb_profile.csv", "comb profile", &["f_hertz", "optical_depth"]);
    f.rows = profile.frequencies().into_iter().zip(profile.depth()).map(|(x, d)| vec![x, *d]).collect();
    f
}

/// Composite output and each channel's filtered output.
pub fn multimode_traces(out: &MultimodeOutput) -> PlotFile {
    let mut cols = vec!["t_seconds".to_string(), "composite_intensity".to_string()];
    cols.extend((0..out.channels.len()).map(|i| format!("filtered_{i}_intensity")));
    let composite = out.composite_output();
    let mut f = PlotFile {
        name: "afc_multimode_traces.csv".into(),
        panel: "AFC spectral multiplexing".into(),
        columns: cols,
        rows: Vec::with_capacity(composite.len()),
    };
    for (i, c) in composite.iter().enumerate() {
        let mut row = vec![i as f64 * out.dt, c.norm_sqr()];
        row.extend(out.channels.iter().map(|ch| ch.filtered[i].norm_sqr()));
        f.rows.push(row);
    }
    f
}
