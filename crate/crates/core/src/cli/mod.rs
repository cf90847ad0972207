//! The `fiberlab` command line.
//!
//! Exit codes: 0 when every check passes, 2 when the computation finished
//! but a bound was violated, 1 on runtime errors, 64 on usage errors and 65
//! on configuration errors.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::catalog;
use crate::error::Error;
use commands::{CommandError, Outcome, Table};
use config::{Config, ConfigError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

#[derive(Debug, Parser)]
#[command(name = "fiberlab", version, about = "Invariant measures and decay of correlations for contracting-fiber skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Approximate the invariant measure and optionally checkpoint it.
    Invariant(Common),
    /// Correlation sequence and its decay rate.
    Decay(Common),
    /// Lipschitz regularity of the invariant disintegration.
    Regularity(Common),
    /// Constants of the regularity and decay bounds.
    Constants(Common),
    /// Spectral gap of the base transfer operator.
    Gap(Common),
    /// Convergence to equilibrium of random zero-average measures.
    Equilibrium(Common),
    /// Envelope construction of the lifted measure.
    Lift(Common),
    /// Annealed correlations of an iterated function system.
    IfsDecay(Common),
    /// Flat distance between two atomic measures.
    WkDist(WkArgs),
    /// Check the declared contraction constants by sampling.
    Certify(Common),
}

#[derive(Debug, Args)]
struct Output {
    /// CSV output path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary path; the summary goes to stdout otherwise.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall time in the summary. Off by default so that repeated
    /// runs produce identical files.
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file, or the name of a catalog system.
    #[arg(long, visible_alias = "system")]
    config: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Compression resolution, e.g. `2^-12`.
    #[arg(long)]
    compress: Option<String>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// First observable (`z`, `z2`, `x0`, `x0*z`, or a constant).
    #[arg(long)]
    f: Option<String>,
    /// Second observable.
    #[arg(long)]
    g: Option<String>,
    /// Observable to lift.
    #[arg(long)]
    psi: Option<String>,
    /// Where `invariant` writes the measure (`.bin` for the binary form).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct WkArgs {
    /// Atoms as `pos:weight` pairs separated by commas.
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    /// Optional configuration providing the fiber space.
    #[arg(long, visible_alias = "system")]
    config: Option<String>,
    #[command(flatten)]
    output: Output,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let name = command_name(&cli.command);
    match execute(cli.command) {
        Ok(code) => code,
        Err(CommandError::Config(e)) => {
            eprintln!("fiberlab {name}: {e}");
            EXIT_CONFIG
        }
        Err(CommandError::Engine(e)) => {
            eprintln!("fiberlab {name}: {e}");
            match e {
                Error::NonContraction(_) => EXIT_VIOLATION,
                _ => EXIT_ERROR,
            }
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Invariant(_) => "invariant",
        Command::Decay(_) => "decay",
        Command::Regularity(_) => "regularity",
        Command::Constants(_) => "constants",
        Command::Gap(_) => "gap",
        Command::Equilibrium(_) => "equilibrium",
        Command::Lift(_) => "lift",
        Command::IfsDecay(_) => "ifs-decay",
        Command::WkDist(_) => "wk-dist",
        Command::Certify(_) => "certify",
    }
}

fn load_config(source: Option<&str>) -> Result<Config, CommandError> {
    let Some(source) = source else {
        return Ok(Config::default());
    };
    let path = Path::new(source);
    if !path.exists() && catalog::by_name(source).is_some() {
        let mut cfg = Config::default();
        cfg.set("system.catalog", source);
        return Ok(cfg);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
    Ok(Config::parse(&text)?)
}

fn apply_overrides(cfg: &mut Config, c: &Common) {
    let mut set = |key: &str, v: Option<String>| {
        if let Some(v) = v {
            cfg.set(key, v);
        }
    };
    set("run.seed", c.seed.map(|v| v.to_string()));
    set("run.depth", c.depth.map(|v| v.to_string()));
    set("run.steps", c.steps.map(|v| v.to_string()));
    set("run.compress", c.compress.clone());
    set("run.nmax", c.nmax.map(|v| v.to_string()));
    set("run.samples", c.samples.map(|v| v.to_string()));
    set("run.trials", c.trials.map(|v| v.to_string()));
    set("run.f", c.f.clone());
    set("run.g", c.g.clone());
    set("run.psi", c.psi.clone());
    set("output.checkpoint", c.checkpoint.as_ref().map(|p| p.display().to_string()));
    set("output.csv", c.output.csv.as_ref().map(|p| p.display().to_string()));
    set("output.json", c.output.json.as_ref().map(|p| p.display().to_string()));
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(command: Command) -> Result<i32, CommandError> {
    let started = Instant::now();
    let name = command_name(&command);
    let (cfg, output, outcome) = match command {
        Command::WkDist(w) => {
            configure_threads(w.output.threads);
            let mut cfg = load_config(w.config.as_deref())?;
            if let Some(p) = &w.output.csv {
                cfg.set("output.csv", p.display().to_string());
            }
            if let Some(p) = &w.output.json {
                cfg.set("output.json", p.display().to_string());
            }
            let sys = if w.config.is_some() { Some(cfg.system()?) } else { None };
            let outcome = commands::wk_dist(sys.as_ref(), &w.a, &w.b)?;
            let mut echo = cfg.clone();
            echo.set("run.a", w.a.clone());
            echo.set("run.b", w.b.clone());
            (echo, w.output, outcome)
        }
        Command::Invariant(c)
        | Command::Decay(c)
        | Command::Regularity(c)
        | Command::Constants(c)
        | Command::Gap(c)
        | Command::Equilibrium(c)
        | Command::Lift(c)
        | Command::IfsDecay(c)
        | Command::Certify(c) => {
            configure_threads(c.output.threads);
            let mut cfg = load_config(c.config.as_deref())?;
            apply_overrides(&mut cfg, &c);
            let outcome = if name == "ifs-decay" {
                let sys = if cfg.has_section("subshift") || cfg.contains("system.catalog") {
                    Some(cfg.system()?)
                } else {
                    None
                };
                commands::ifs_decay(sys.as_ref(), &cfg)?
            } else {
                let sys = cfg.system()?;
                match name {
                    "invariant" => commands::invariant(&sys, &cfg)?,
                    "decay" => commands::decay(&sys, &cfg)?,
                    "regularity" => commands::regularity(&sys, &cfg)?,
                    "constants" => commands::constants(&sys, &cfg)?,
                    "gap" => commands::gap(&sys, &cfg)?,
                    "equilibrium" => commands::equilibrium(&sys, &cfg)?,
                    "lift" => commands::lift(&sys, &cfg)?,
                    _ => commands::certify(&sys, &cfg)?,
                }
            };
            (cfg, c.output, outcome)
        }
    };
    let wall = output.timing.then(|| started.elapsed().as_millis() as u64);
    emit(name, &cfg, &outcome, wall)?;
    Ok(if outcome.passed() { EXIT_PASS } else { EXIT_VIOLATION })
}

/// The JSON summary document.
pub fn summary(command: &str, cfg: &Config, outcome: &Outcome, wall_time_ms: Option<u64>) -> Value {
    json!({
        "command": command,
        "config": cfg.echo(),
        "results": outcome.results,
        "pass": outcome.pass,
        "wall_time_ms": wall_time_ms,
    })
}

/// Renders a table as RFC-4180 CSV with LF line endings.
pub fn render_csv(table: &Table) -> Result<Vec<u8>, Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let format = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&table.header).map_err(format)?;
    for row in &table.rows {
        w.write_record(row).map_err(format)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn emit(command: &str, cfg: &Config, outcome: &Outcome, wall: Option<u64>) -> Result<(), CommandError> {
    let mut doc = serde_json::to_string_pretty(&summary(command, cfg, outcome, wall))
        .map_err(|e| Error::Format(e.to_string()))?;
    doc.push('\n');
    if let Some(path) = cfg.raw("output.csv") {
        std::fs::write(path, render_csv(&outcome.table)?).map_err(Error::from)?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cfg.raw("output.json") {
        Some(path) => std::fs::write(path, &doc).map_err(Error::from)?,
        None if outcome.text.is_none() => out.write_all(doc.as_bytes()).map_err(Error::from)?,
        None => {}
    }
    if let Some(text) = &outcome.text {
        writeln!(out, "{text}").map_err(Error::from)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors() {
        assert_eq!(run(["fiberlab", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["fiberlab"]), EXIT_USAGE);
        assert_eq!(run(["fiberlab", "decay", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["fiberlab", "--help"]), EXIT_PASS);
    }

    #[test]
    fn config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.cfg");
        std::fs::write(&bad, "[subshift]\nalphabet = 2\noops\n").unwrap();
        assert_eq!(run(["fiberlab", "constants", "--config", bad.to_str().unwrap()]), EXIT_CONFIG);
        // Randomized commands refuse to run without a seed.
        assert_eq!(run(["fiberlab", "constants", "--config", "dyadic"]), EXIT_CONFIG);
    }

    #[test]
    fn csv_uses_lf() {
        let t = Table { header: vec!["n", "v"], rows: vec![vec!["0".into(), "a,b".into()]] };
        assert_eq!(render_csv(&t).unwrap(), b"n,v\n0,\"a,b\"\n");
    }
}
