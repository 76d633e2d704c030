//! Command-line surface. Data goes to files; diagnostics go to stderr.
//!
//! Exit status: 0 success, 1 validation or I/O error, 2 a fit did not converge.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::exec::{init_threads, Exec};
use crate::io::config::{parse_config_with_seed, Experiment, ExperimentConfig};
use crate::io::plotdata::emit_plotdata;
use crate::io::trace_csv::{write_trace, TraceMeta};
use crate::runner::{self, Mode};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "reqm-sim", version, about = "Rare-earth spectroscopy and AFC memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (alternative to the positional argument).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; defaults to the config's output.dir, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, env = "REQM_SIM_THREADS")]
    threads: Option<usize>,

    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward simulation: writes traces and a result document.
    Simulate {
        #[arg(value_name = "CONFIG")]
        file: Option<PathBuf>,
    },
    /// Simulate (or read a trace) and fit.
    Fit {
        #[arg(value_name = "CONFIG")]
        file: Option<PathBuf>,
    },
    /// Runs the invariant and oracle suite.
    Verify,
    /// Runs every `*.conf` in a directory and writes plot data.
    Figures { dir: PathBuf },
}

struct Ctx {
    out: Option<PathBuf>,
    seed: Option<u64>,
    verbose: bool,
    exec: Exec,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_INVALID;
        }
        if !init_threads(n) && cli.verbose {
            eprintln!("note: thread count not applied (pool already set up or built without parallelism)");
        }
    }
    let ctx = Ctx { out: cli.out, seed: cli.seed, verbose: cli.verbose, exec: Exec::default() };
    let config_path = |positional: Option<PathBuf>| positional.or(cli.config.clone());
    match cli.command {
        Command::Simulate { file } => single(&ctx, config_path(file), Mode::Simulate),
        Command::Fit { file } => single(&ctx, config_path(file), Mode::Fit),
        Command::Verify => {
            let checks = verify::run_suite(ctx.exec);
            print!("{}", verify::format_table(&checks));
            if checks.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_INVALID
            }
        }
        Command::Figures { dir } => figures(&ctx, &dir),
    }
}

fn report(e: &Error) {
    match e {
        Error::Config(errors) => {
            for err in errors {
                eprintln!("config error: {err}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_with_seed(&text, seed)
}

fn single(ctx: &Ctx, path: Option<PathBuf>, mode: Mode) -> i32 {
    let Some(path) = path else {
        eprintln!("error: no config given (positional or --config)");
        return EXIT_INVALID;
    };
    let result = load(&path, ctx.seed).and_then(|cfg| {
        let out = ctx
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        execute(ctx, &cfg, &path, mode, &out, false)
    });
    finish(result)
}

fn finish(result: Result<bool>) -> i32 {
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_NOT_CONVERGED,
        Err(e) => {
            report(&e);
            EXIT_INVALID
        }
    }
}

/// Runs one config and writes its files; returns whether every fit converged.
fn execute(ctx: &Ctx, cfg: &ExperimentConfig, path: &Path, mode: Mode, out_dir: &Path, plots: bool) -> Result<bool> {
    let started = Instant::now();
    let base = path.parent().unwrap_or(Path::new("."));
    ctx.note(format!("{}: {} ({})", path.display(), cfg.kind.name(), mode.name()));
    let mut run = runner::run(cfg, mode, base, ctx.exec)?;
    let doc = &mut run.document;
    let meta = TraceMeta {
        seed: cfg.is_stochastic().then_some(cfg.seed_or_zero()),
        config_sha256: Some(doc.config_sha256.clone()),
        ..Default::default()
    };
    for t in &run.traces {
        let name = format!("{}_{}.csv", cfg.prefix, t.name);
        write_trace(&out_dir.join(&name), &t.trace, &meta)?;
        doc.files.push(name);
    }
    if plots {
        let dir = out_dir.join(&cfg.prefix);
        for p in emit_plotdata(&run.plots, &dir, &doc.config_sha256)? {
            let rel = p.strip_prefix(out_dir).unwrap_or(&p);
            doc.files.push(rel.display().to_string());
        }
    }
    doc.wall_clock_seconds = started.elapsed().as_secs_f64();
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
    let doc_path = out_dir.join(format!("{}_{}.json", cfg.prefix, mode.name()));
    doc.write(&doc_path)?;
    ctx.note(format!("wrote {}", doc_path.display()));
    if !doc.converged {
        eprintln!("error: fit did not converge; see {}", doc_path.display());
    }
    Ok(doc.converged)
}

fn figures(ctx: &Ctx, dir: &Path) -> i32 {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            report(&Error::io(dir, e));
            return EXIT_INVALID;
        }
    };
    let mut configs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "conf"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        eprintln!("error: no *.conf files in {}", dir.display());
        return EXIT_INVALID;
    }
    let out = ctx.out.clone().unwrap_or_else(|| PathBuf::from("figures"));
    let mut status = EXIT_OK;
    for path in configs {
        let result = load(&path, ctx.seed).and_then(|cfg| {
            let mode = match cfg.experiment {
                Experiment::AfcTemporal(_) | Experiment::AfcSpectral(_) => Mode::Simulate,
                _ => Mode::Fit,
            };
            execute(ctx, &cfg, &path, mode, &out, true)
        });
        let code = match result {
            Err(e) => {
                eprintln!("{}:", path.display());
                report(&e);
                EXIT_INVALID
            }
            other => finish(other),
        };
        status = match (status, code) {
            (EXIT_INVALID, _) | (_, EXIT_INVALID) => EXIT_INVALID,
            (a, b) => a.max(b),
        };
    }
    status
}

#[cfg(test)]
mod tests {
    use std::fs;
    use std::path::{Path, PathBuf};

    use super::*;
    use crate::io::{config_hash, read_trace};

    fn fixtures() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
    }

    fn call(args: &[&str]) -> i32 {
        run(std::iter::once("reqm-sim").chain(args.iter().copied()))
    }

    fn path_str(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn sorted_files(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p);
                }
            }
        }
        out.sort();
        out
    }

    fn without_wall_clock(json: &str) -> String {
        json.lines().filter(|l| !l.contains("\"wall_clock_seconds\"")).collect::<Vec<_>>().join("\n")
    }

    #[test]
    fn simulate_writes_traces_and_document() {
        let out = tempfile::tempdir().unwrap();
        let conf = fixtures().join("echo_2ppe_0G.conf");
        assert_eq!(call(&["simulate", path_str(&conf), "--out", path_str(out.path())]), EXIT_OK);
        let hash = config_hash(&fs::read_to_string(&conf).unwrap());
        let (trace, meta) = read_trace(&out.path().join("2ppe_echo_2ppe.csv")).unwrap();
        assert_eq!(trace.len(), 30);
        assert_eq!(meta.config_sha256.as_deref(), Some(hash.as_str()));
        assert_eq!(meta.seed, Some(11));
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.path().join("2ppe_simulate.json")).unwrap()).unwrap();
        assert_eq!(doc["config_sha256"], hash.as_str());
        assert_eq!(doc["kind"], "2ppe");
    }

    #[test]
    fn reruns_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let conf = fixtures().join("shb_decay.conf");
        for dir in [&a, &b] {
            assert_eq!(call(&["fit", path_str(&conf), "--out", path_str(dir.path())]), EXIT_OK);
        }
        let (fa, fb) = (sorted_files(a.path()), sorted_files(b.path()));
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            let (sx, sy) = (fs::read_to_string(x).unwrap(), fs::read_to_string(y).unwrap());
            if x.extension().is_some_and(|e| e == "json") {
                assert_eq!(without_wall_clock(&sx), without_wall_clock(&sy));
            } else {
                assert_eq!(sx, sy, "{}", x.display());
            }
        }
    }

    #[test]
    fn seed_flag_overrides_config() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let conf = fixtures().join("shb_decay.conf");
        call(&["simulate", path_str(&conf), "--out", path_str(a.path())]);
        call(&["simulate", path_str(&conf), "--out", path_str(b.path()), "--seed", "8"]);
        let (ta, ma) = read_trace(&a.path().join("shb-decay_hole_area.csv")).unwrap();
        let (tb, mb) = read_trace(&b.path().join("shb-decay_hole_area.csv")).unwrap();
        assert_eq!((ma.seed, mb.seed), (Some(7), Some(8)));
        assert_ne!(ta.samples(), tb.samples());
    }

    #[test]
    fn invalid_config_exits_one_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("bad.conf");
        fs::write(&conf, "kind = 2ppe\necho.t2 = 3 parsecs\nnoise.sigma = 0.1\n").unwrap();
        assert_eq!(call(&["simulate", path_str(&conf), "--out", path_str(dir.path())]), EXIT_INVALID);
        let Err(Error::Config(errors)) = load(&conf, None) else { panic!("expected config errors") };
        let shown: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        assert!(shown.iter().any(|e| e.starts_with("line 2: echo.t2")), "{shown:?}");
        assert!(shown.iter().any(|e| e.contains("seed")), "{shown:?}");
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["simulate", "--no-such-flag"]), EXIT_INVALID);
        assert_eq!(call(&["simulate"]), EXIT_INVALID);
        assert_eq!(call(&["simulate", "/nonexistent/x.conf"]), EXIT_INVALID);
        assert_eq!(call(&["--threads", "0", "verify"]), EXIT_INVALID);
    }

    #[test]
    fn non_convergence_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(call(&["simulate", path_str(&fixtures().join("shb_decay.conf")), "--out", path_str(dir.path())]), EXIT_OK);
        let conf = dir.path().join("refit.conf");
        fs::write(
            &conf,
            "kind = fit\nfit.input = shb-decay_hole_area.csv\nfit.model = multiexponential\nfit.max_iterations = 1\n",
        )
        .unwrap();
        assert_eq!(call(&["fit", path_str(&conf), "--out", path_str(dir.path())]), EXIT_NOT_CONVERGED);
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("fit_fit.json")).unwrap()).unwrap();
        assert_eq!(doc["converged"], false);
    }

    #[test]
    fn fit_kind_reads_a_written_trace() {
        let dir = tempfile::tempdir().unwrap();
        call(&["simulate", path_str(&fixtures().join("shb_decay.conf")), "--out", path_str(dir.path())]);
        let conf = dir.path().join("refit.conf");
        fs::write(&conf, "kind = fit\nfit.input = shb-decay_hole_area.csv\nfit.model = multiexponential\n").unwrap();
        assert_eq!(call(&["fit", "--config", path_str(&conf), "--out", path_str(dir.path())]), EXIT_OK);
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("fit_fit.json")).unwrap()).unwrap();
        let lifetime = doc["fits"][0]["estimates"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["name"] == "lifetime_2")
            .unwrap()["value"]
            .as_f64()
            .unwrap();
        assert!((lifetime / 55.14e-3 - 1.0).abs() < 0.1, "{lifetime}");
    }

    #[test]
    fn figures_covers_every_fixture() {
        let out = tempfile::tempdir().unwrap();
        assert_eq!(call(&["figures", path_str(&fixtures()), "--out", path_str(out.path())]), EXIT_OK);
        for plot in [
            "shb-decay/hole_decay_points.csv",
            "2ppe/echo_2ppe_fit.csv",
            "3ppe_200G/gamma_eff_fit.csv",
            "3ppe_500G/gamma_eff_points.csv",
            "hole-broadening/gamma_sd_vs_field.csv",
            "afc-temporal/afc_traces.csv",
            "afc-spectral/afc_multimode_traces.csv",
        ] {
            let text = fs::read_to_string(out.path().join(plot)).unwrap_or_else(|e| panic!("{plot}: {e}"));
            assert!(text.starts_with("# columns: "), "{plot}");
            assert!(text.contains("# meta config_sha256="), "{plot}");
        }
        // every file carries the hash of the config that produced it
        for f in sorted_files(out.path()) {
            let text = fs::read_to_string(&f).unwrap();
            assert!(text.contains("config_sha256"), "{}", f.display());
        }
    }

    #[test]
    fn verify_passes() {
        assert_eq!(call(&["verify"]), EXIT_OK);
    }

    #[test]
    fn afc_kinds_refuse_fit() {
        let out = tempfile::tempdir().unwrap();
        assert_eq!(call(&["fit", path_str(&fixtures().join("afc_temporal.conf")), "--out", path_str(out.path())]), EXIT_INVALID);
    }
}
