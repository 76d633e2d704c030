//! Trace files: `# columns:` header, `# meta key=value` lines, then one row
//! per sample. Numbers use shortest round-trip formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::{Axis, TimeTrace, TraceKind};

pub const GENERATOR: &str = concat!("reqm-sim ", env!("CARGO_PKG_VERSION"));

/// Provenance carried in the comment header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceMeta {
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub generator: Option<String>,
    /// Any other `key=value` pairs, in key order.
    pub extra: BTreeMap<String, String>,
}

fn columns(kind: TraceKind) -> &'static str {
    match kind {
        TraceKind::FieldEnvelope => "t_seconds,re,im",
        TraceKind::OpticalDepth => "f_hertz,value",
        _ => "t_seconds,value",
    }
}

pub fn format_trace(trace: &TimeTrace, meta: &TraceMeta) -> String {
    let kind = trace.kind();
    let mut out = String::new();
    let _ = writeln!(out, "# columns: {}", columns(kind));
    let _ = writeln!(out, "# meta kind={}", kind.name());
    let _ = writeln!(out, "# meta units={},{}", kind.axis_unit(), kind.value_unit());
    let _ = writeln!(out, "# meta rows={}", trace.len());
    if let Axis::Uniform { start, step } = trace.axis() {
        let _ = writeln!(out, "# meta t_start={start:?}");
        let _ = writeln!(out, "# meta dt={step:?}");
    }
    let _ = writeln!(out, "# meta generator={}", meta.generator.as_deref().unwrap_or(GENERATOR));
    if let Some(seed) = meta.seed {
        let _ = writeln!(out, "# meta seed={seed}");
    }
    if let Some(h) = &meta.config_sha256 {
        let _ = writeln!(out, "# meta config_sha256={h}");
    }
    for (k, v) in &meta.extra {
        let _ = writeln!(out, "# meta {k}={v}");
    }
    let s = trace.samples();
    for i in 0..trace.len() {
        let t = trace.time(i);
        if kind == TraceKind::FieldEnvelope {
            let _ = writeln!(out, "{t:?},{:?},{:?}", s[2 * i], s[2 * i + 1]);
        } else {
            let _ = writeln!(out, "{t:?},{:?}", s[i]);
        }
    }
    out
}

/// Writes next to the target and renames, so readers never see half a file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_trace(path: &Path, trace: &TimeTrace, meta: &TraceMeta) -> Result<()> {
    write_atomic(path, format_trace(trace, meta).as_bytes())
}

pub fn read_trace(path: &Path) -> Result<(TimeTrace, TraceMeta)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}

/// Parses a whole trace file; `origin` labels errors.
pub fn parse_trace(text: &str, origin: &str) -> Result<(TimeTrace, TraceMeta)> {
    let fail = |line: usize, reason: String| Error::Trace { path: origin.to_string(), line, reason };
    let mut header: Option<(usize, String)> = None;
    let mut raw_meta: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut width = 0;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() {
            continue;
        }
        if let Some(c) = content.strip_prefix('#') {
            let c = c.trim();
            if let Some(cols) = c.strip_prefix("columns:") {
                if !times.is_empty() {
                    return Err(fail(line, "header after data rows".into()));
                }
                header = Some((line, cols.trim().to_string()));
            } else if let Some(kv) = c.strip_prefix("meta ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| fail(line, format!("meta line `{kv}` is not key=value")))?;
                raw_meta.insert(k.trim().to_string(), (line, v.trim().to_string()));
            }
            continue;
        }
        let Some((_, cols)) = &header else {
            return Err(fail(line, "data before the `# columns:` header".into()));
        };
        if width == 0 {
            width = cols.split(',').count();
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(fail(line, format!("expected {width} columns, found {}", fields.len())));
        }
        let mut nums = Vec::with_capacity(width);
        for f in fields {
            let v: f64 = f.parse().map_err(|_| fail(line, format!("`{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(fail(line, format!("non-finite value `{f}`")));
            }
            nums.push(v);
        }
        times.push(nums[0]);
        values.extend_from_slice(&nums[1..]);
    }

    let (header_line, cols) = header.ok_or_else(|| fail(1, "missing `# columns:` header".into()))?;
    let (kind_line, kind_name) = raw_meta
        .remove("kind")
        .ok_or_else(|| fail(header_line, "missing `# meta kind=` line".into()))?;
    let kind = TraceKind::from_name(&kind_name)
        .ok_or_else(|| fail(kind_line, format!("unknown trace kind `{kind_name}`")))?;
    if cols != columns(kind) {
        return Err(fail(header_line, format!("columns `{cols}` do not match kind {}", kind.name())));
    }
    if times.is_empty() {
        return Err(fail(header_line, "no data rows".into()));
    }
    if let Some((line, rows)) = raw_meta.remove("rows") {
        let n: usize = rows.parse().map_err(|_| fail(line, format!("bad row count `{rows}`")))?;
        if n != times.len() {
            return Err(fail(line, format!("header promises {n} rows, file has {}", times.len())));
        }
    }
    raw_meta.remove("units");
    let start = raw_meta.remove("t_start");
    let step = raw_meta.remove("dt");

    let trace = match (start, step) {
        (Some((_, a)), Some((line, b))) => {
            let (t0, dt): (f64, f64) = match (a.parse(), b.parse()) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Err(fail(line, "bad t_start/dt".into())),
            };
            if let Some(i) = (0..times.len()).find(|&i| times[i] != t0 + i as f64 * dt) {
                return Err(fail(data_line(text, i), "time differs from t_start + i*dt".into()));
            }
            TimeTrace::uniform(kind, t0, dt, values)
        }
        _ if kind.requires_uniform_grid() => {
            let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
            let tol = 1e-9 * dt.abs();
            if let Some(i) = (0..times.len()).find(|&i| (times[i] - (times[0] + i as f64 * dt)).abs() > tol) {
                return Err(fail(
                    data_line(text, i),
                    format!("{} traces need a uniform grid", kind.name()),
                ));
            }
            TimeTrace::uniform(kind, times[0], dt, values)
        }
        _ => TimeTrace::sampled(kind, times, values),
    }
    .map_err(|e| match e {
        Error::UnsortedGrid { index } => fail(data_line(text, index), "abscissa is not increasing".into()),
        other => fail(header_line, other.to_string()),
    })?;

    let mut meta = TraceMeta::default();
    if let Some((line, s)) = raw_meta.remove("seed") {
        meta.seed = Some(s.parse().map_err(|_| fail(line, format!("bad seed `{s}`")))?);
    }
    meta.config_sha256 = raw_meta.remove("config_sha256").map(|v| v.1);
    meta.generator = raw_meta.remove("generator").map(|v| v.1);
    meta.extra = raw_meta.into_iter().map(|(k, (_, v))| (k, v)).collect();
    Ok((trace, meta))
}

/// 1-based file line of data row `row`.
fn data_line(text: &str, row: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .nth(row)
        .map_or(0, |(i, _)| i + 1)
}
