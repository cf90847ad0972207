use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Config, ConfigError};
use crate::error::Error;
use crate::fiber::FiberSystem;
use crate::ifs::{annealed_correlation, AnnealedOptions, IfsSpec};
use crate::lifting::{envelope_sequence, invariance_check};
use crate::measure::{wk_distance, Atom, FiberSpace, FiniteSignedMeasure};
use crate::statistics::{correlation_sequence, theta_membership_with, Observable};
use crate::symbolic::estimate_basis_gap;
use crate::transfer::{
    bound_constants, equilibrium_rate, invariant_measure, strong_norm, BoundConstants, InvariantRun,
    LeafwiseMeasure,
};

#[derive(Debug)]
pub enum CommandError {
    Config(ConfigError),
    Engine(Error),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Engine(e)
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Engine(e.into())
    }
}

type CmdResult = Result<Outcome, CommandError>;

/// A CSV table: header plus rows of preformatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub results: Value,
    pub pass: BTreeMap<String, bool>,
    pub table: Table,
    /// Text for standard output in place of the JSON summary.
    pub text: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.pass.values().all(|&p| p)
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn seed(cfg: &Config) -> Result<u64, ConfigError> {
    cfg.seed()?
        .ok_or_else(|| ConfigError::general("this command needs a seed: pass --seed or set seed in [run]"))
}

fn observable(cfg: &Config, key: &str, default: &str) -> Result<Observable, ConfigError> {
    let raw = cfg.raw(key).unwrap_or(default);
    Observable::parse(raw).map_err(|e| cfg.error_for(key, e.to_string()))
}

fn start_measure(sys: &FiberSystem) -> Result<FiniteSignedMeasure, Error> {
    let z0 = match sys.space().as_ref() {
        FiberSpace::Interval { lo, .. } => *lo,
        FiberSpace::Finite { .. } => 0.0,
    };
    FiniteSignedMeasure::dirac(sys.space().clone(), z0)
}

fn invariant_run(sys: &FiberSystem, depth: usize, steps: usize, delta: f64) -> Result<InvariantRun, Error> {
    invariant_measure(sys, depth, steps, delta, &start_measure(sys)?)
}

/// Measured basis rate and the constants built from it.
fn measured_constants(sys: &FiberSystem, cfg: &Config) -> Result<(BoundConstants, Value), CommandError> {
    let seed = seed(cfg)?;
    let depth = cfg.count_or("run.gap_depth", 8)?;
    let iterations = cfg.count_or("run.gap_iterations", 6)?;
    let trials = cfg.count_or("run.gap_trials", 8)?;
    let gap = estimate_basis_gap(sys.spec(), depth, iterations, trials, seed)?;
    let constants = bound_constants(sys, gap.r);
    Ok((constants, json!({ "r": gap.r, "d": gap.d, "depth": depth, "iterations": iterations, "trials": trials })))
}

pub fn invariant(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let depth = cfg.count_or("run.depth", 4)?;
    let steps = cfg.count_or("run.steps", 12)?;
    let delta = cfg.number_or("run.compress", 0.0)?;
    let run = invariant_run(sys, depth, steps, delta)?;
    let mu0 = &run.measure;
    let norms = strong_norm(mu0);
    if let Some(path) = cfg.raw("output.checkpoint") {
        let path = std::path::Path::new(path);
        if path.extension().is_some_and(|e| e == "bin") {
            mu0.write_binary(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        } else {
            std::fs::write(path, mu0.to_json())?;
        }
    }
    let mut table = Table::new(&["word", "density", "atoms", "fiber_mean"]);
    let density = mu0.density();
    for (i, w) in mu0.word_table().iter().enumerate() {
        let e = mu0.entry(i);
        let mass = density.values[i];
        let mean = if mass != 0.0 { e.iter().map(|a| a.pos * a.weight).sum::<f64>() / mass } else { 0.0 };
        let word: String = w.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
        table.push(vec![word, num(mass), e.len().to_string(), num(mean)]);
    }
    let results = json!({
        "depth": depth,
        "steps": steps,
        "compress": delta,
        "start_depth": run.start_depth,
        "residual": run.residual,
        "residual_bound": run.residual_bound,
        "norms": to_value(&norms),
        "total_atoms": mu0.total_atoms(),
    });
    let pass = BTreeMap::from([("residual".to_string(), run.residual <= run.residual_bound + 1e-12)]);
    Ok(Outcome { results, pass, table, text: None })
}

pub fn decay(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let n_max = cfg.count_or("run.nmax", 10)?;
    let depth = cfg.count_or("run.depth", n_max + 1)?;
    let steps = cfg.count_or("run.steps", 12)?;
    let delta = cfg.number_or("run.compress", 0.0)?;
    let f = observable(cfg, "run.f", "z")?;
    let g = observable(cfg, "run.g", "z")?;
    let (constants, gap) = measured_constants(sys, cfg)?;
    let run = invariant_run(sys, depth, steps, delta)?;
    let report = correlation_sequence(sys, &run.measure, &f, &g, n_max, delta, constants.xi)?;
    let mut table = Table::new(&["n", "C_n", "bound_value", "margin"]);
    for (n, (v, b)) in report.values.iter().zip(report.bound_values()).enumerate() {
        table.push(vec![n.to_string(), num(*v), num(b), num(b - v)]);
    }
    let results = json!({
        "nmax": n_max,
        "depth": depth,
        "steps": steps,
        "compress": delta,
        "f": f,
        "g": g,
        "basis_gap": gap,
        "constants": to_value(&constants),
        "decay": to_value(&report),
    });
    let pass = BTreeMap::from([("rate_bound".to_string(), report.bound_passed)]);
    Ok(Outcome { results, pass, table, text: None })
}

pub fn regularity(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let depth = cfg.count_or("run.depth", 7)?;
    let steps = cfg.count_or("run.steps", 10)?;
    let delta = cfg.number_or("run.compress", 0.0)?;
    let f = observable(cfg, "run.f", "z")?;
    let run = invariant_run(sys, depth, steps, delta)?;
    let mu0 = &run.measure;
    let constants = bound_constants(sys, 0.0);
    let norms = strong_norm(mu0);
    let lip = norms.lip_disint;
    let theta = sys.spec().theta();
    let slack = 2.0 * (steps + 1) as f64 * delta / theta.powi(depth as i32 - 1) + 1e-9;
    let membership = theta_membership_with(&f, mu0, &norms)?;
    let mut table = Table::new(&["quantity", "value", "bound"]);
    table.push(vec!["lipschitz_constant".into(), num(lip), num(constants.lip_bound + slack)]);
    table.push(vec!["weak_norm".into(), num(norms.weak), String::new()]);
    table.push(vec!["strong_norm".into(), num(norms.strong), String::new()]);
    table.push(vec!["marginal_lip".into(), num(membership.marginal_lip), num(membership.marginal_bound)]);
    let results = json!({
        "depth": depth,
        "steps": steps,
        "compress": delta,
        "lipschitz_constant": lip,
        "lip_bound": constants.lip_bound,
        "slack": slack,
        "c1": constants.c1,
        "norms": to_value(&norms),
        "membership": to_value(&membership),
    });
    let pass = BTreeMap::from([
        ("lipschitz_bound".to_string(), lip <= constants.lip_bound + slack),
        ("membership".to_string(), membership.finite && membership.marginal_ok),
    ]);
    Ok(Outcome { results, pass, table, text: None })
}

pub fn constants(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let (c, gap) = measured_constants(sys, cfg)?;
    let mut table = Table::new(&["quantity", "value"]);
    let rows: [(&str, f64); 12] = [
        ("alpha", c.alpha),
        ("H", c.h),
        ("theta", c.theta),
        ("g_theta", c.g_theta),
        ("g_theta_sum", c.g_theta_sum),
        ("C1", c.c1),
        ("C1_sum", c.c1_sum),
        ("r", c.r),
        ("beta1", c.beta1),
        ("lambda0", c.lambda0),
        ("xi", c.xi),
        ("lip_bound", c.lip_bound),
    ];
    for (k, v) in rows {
        table.push(vec![k.to_string(), num(v)]);
    }
    let results = json!({ "constants": to_value(&c), "basis_gap": gap });
    let pass = BTreeMap::from([("contraction".to_string(), c.xi < 1.0)]);
    Ok(Outcome { results, pass, table, text: None })
}

pub fn gap(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let seed = seed(cfg)?;
    let depth = cfg.count_or("run.depth", 8)?;
    let iterations = cfg.count_or("run.steps", 6)?;
    let trials = cfg.count_or("run.trials", 8)?;
    let g = estimate_basis_gap(sys.spec(), depth, iterations, trials, seed)?;
    let mut table = Table::new(&["j", "max_ratio", "bound"]);
    for (j, v) in g.max_ratios.iter().enumerate() {
        table.push(vec![j.to_string(), num(*v), num(g.d * g.r.powi(j as i32))]);
    }
    let results = json!({ "depth": depth, "iterations": iterations, "trials": trials, "r": g.r, "d": g.d, "max_ratios": g.max_ratios });
    let pass = BTreeMap::from([("contraction".to_string(), g.r < 1.0)]);
    Ok(Outcome { results, pass, table, text: None })
}

pub fn equilibrium(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let seed = seed(cfg)?;
    let n_max = cfg.count_or("run.nmax", 10)?;
    let depth = cfg.count_or("run.depth", n_max + 1)?;
    let delta = cfg.number_or("run.compress", 0.0)?;
    let trials = cfg.count_or("run.trials", 5)?;
    let (constants, gap) = measured_constants(sys, cfg)?;
    let reference = LeafwiseMeasure::product(sys.spec().clone(), &start_measure(sys)?, depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Table::new(&["trial", "j", "weak_norm"]);
    let mut reports = Vec::with_capacity(trials);
    for t in 0..trials {
        let mu = LeafwiseMeasure::random_signed(sys.spec().clone(), sys.space().clone(), depth, 4, &mut rng)?
            .centered(&reference)?;
        let r = equilibrium_rate(sys, &mu, n_max, delta, constants.r)?;
        for (j, v) in r.norms.iter().enumerate() {
            table.push(vec![t.to_string(), j.to_string(), num(*v)]);
        }
        reports.push(r);
    }
    let results = json!({
        "nmax": n_max,
        "depth": depth,
        "compress": delta,
        "basis_gap": gap,
        "beta1": constants.beta1,
        "fitted_rates": reports.iter().map(|r| r.fitted_rate).collect::<Vec<_>>(),
        "trials": to_value(&reports),
    });
    let pass = BTreeMap::from([("rate_bound".to_string(), reports.iter().all(|r| r.passed))]);
    Ok(Outcome { results, pass, table, text: None })
}

pub fn lift(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let n_max = cfg.count_or("run.nmax", 10)?;
    let depth = cfg.count_or("run.depth", n_max + 4)?;
    let samples = cfg.count_or("run.fiber_samples", 3)?;
    let psi = observable(cfg, "run.psi", "z")?;
    let seq = envelope_sequence(sys, &psi, n_max, depth, samples)?;
    let mut table = Table::new(&["n", "lower", "upper", "gap", "bound"]);
    for e in &seq {
        table.push(vec![e.n.to_string(), num(e.lower), num(e.upper), num(e.gap), num(e.bound)]);
    }
    let mut pass = BTreeMap::from([("gap_bound".to_string(), seq.iter().all(|e| e.gap <= e.bound))]);
    let invariance = if depth >= n_max + 3 {
        let r = invariance_check(sys, &psi, n_max, depth, samples)?;
        pass.insert("invariance".into(), r.invariance_passed);
        pass.insert("marginal".into(), r.marginal_passed);
        Some(r)
    } else {
        None
    };
    let last = seq.last().expect("n_max + 1 envelopes");
    let results = json!({
        "nmax": n_max,
        "depth": depth,
        "fiber_samples": samples,
        "psi": psi,
        "lifted_value": last.lower,
        "gap": last.gap,
        "envelopes": to_value(&seq),
        "invariance": invariance.map(|r| to_value(&r)),
    });
    Ok(Outcome { results, pass, table, text: None })
}

pub fn ifs_decay(sys: Option<&FiberSystem>, cfg: &Config) -> CmdResult {
    let seed = seed(cfg)?;
    let ifs = match cfg.ifs()? {
        Some(ifs) => ifs,
        None => {
            let sys = sys.ok_or_else(|| ConfigError::general("ifs-decay needs an [ifs] section or a system"))?;
            IfsSpec::from_system(sys)?
        }
    };
    let n_max = cfg.count_or("run.nmax", 12)?;
    let samples = cfg.count_or("run.samples", 100_000)?;
    let theta = cfg.number_or("subshift.theta", sys.map_or(0.5, |s| s.spec().theta()))?;
    let opts = AnnealedOptions {
        theta,
        invariant_steps: cfg.count_or("run.steps", 12)?,
        delta: cfg.number_or("run.compress", 0.0)?,
        burn_in: cfg.count_or("run.burn_in", crate::ifs::MIN_BURN_IN)?,
        ..AnnealedOptions::default()
    };
    let g1 = observable(cfg, "run.f", "z")?;
    let g2 = observable(cfg, "run.g", "z")?;
    let lifted = ifs.skew_product(theta)?;
    let (constants, gap) = measured_constants(&lifted, cfg)?;
    let report = annealed_correlation(&ifs, &g1, &g2, n_max, samples, seed, constants.xi, opts)?;
    let prefactor = report
        .rows
        .iter()
        .map(|r| r.transfer.abs() / constants.xi.powi(r.n as i32))
        .fold(0.0, f64::max);
    let mut table = Table::new(&["n", "annealed_mc", "annealed_transfer", "stderr", "bound"]);
    for r in &report.rows {
        let bound = prefactor * constants.xi.powi(r.n as i32);
        table.push(vec![r.n.to_string(), num(r.monte_carlo), num(r.transfer), num(r.stderr), num(bound)]);
    }
    let results = json!({
        "nmax": n_max,
        "samples": samples,
        "ifs": to_value(&ifs),
        "basis_gap": gap,
        "xi": constants.xi,
        "fitted_rate": report.fitted_rate,
        "prefactor_estimate": prefactor,
        "rows": to_value(&report.rows),
    });
    let pass = BTreeMap::from([
        ("agreement".to_string(), report.agreement_passed),
        ("rate_bound".to_string(), report.bound_passed),
    ]);
    Ok(Outcome { results, pass, table, text: None })
}

/// Parses `pos:weight` pairs separated by commas.
pub fn parse_atoms(s: &str) -> Result<Vec<Atom>, String> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (pos, w) = p.split_once(':').ok_or_else(|| format!("expected pos:weight, found {p:?}"))?;
            Ok(Atom::new(super::config::parse_number(pos)?, super::config::parse_number(w)?))
        })
        .collect()
}

pub fn wk_dist(sys: Option<&FiberSystem>, a: &str, b: &str) -> CmdResult {
    let space = match sys {
        Some(s) => s.space().clone(),
        None => Arc::new(FiberSpace::unit()),
    };
    let parse = |s: &str| -> Result<FiniteSignedMeasure, CommandError> {
        let atoms = parse_atoms(s).map_err(ConfigError::general)?;
        Ok(FiniteSignedMeasure::new(space.clone(), atoms)?)
    };
    let (ma, mb) = (parse(a)?, parse(b)?);
    let d = wk_distance(&ma, &mb);
    let mut table = Table::new(&["a", "b", "distance"]);
    table.push(vec![a.to_string(), b.to_string(), num(d)]);
    let results = json!({ "a": ma.to_pairs(), "b": mb.to_pairs(), "distance": d });
    Ok(Outcome { results, pass: BTreeMap::new(), table, text: Some(num(d)) })
}

pub fn certify(sys: &FiberSystem, cfg: &Config) -> CmdResult {
    let seed = seed(cfg)?;
    let samples = cfg.count_or("run.samples", 10_000)?;
    let (cert, violation) = match sys.certify_constants(samples, seed) {
        Ok(c) => (Some(c), None),
        Err(Error::Certification(msg)) => (None, Some(msg)),
        Err(e) => return Err(e.into()),
    };
    let mut table = Table::new(&["quantity", "declared", "observed"]);
    if let Some(c) = &cert {
        table.push(vec!["alpha".into(), num(c.alpha_declared), num(c.alpha_observed)]);
        table.push(vec!["H".into(), num(c.h_declared), num(c.h_observed)]);
    }
    let results = json!({
        "samples": samples,
        "certificate": cert.map(|c| to_value(&c)),
        "violation": violation,
    });
    let pass = BTreeMap::from([("declared_constants".to_string(), violation.is_none())]);
    Ok(Outcome { results, pass, table, text: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_lists() {
        assert_eq!(parse_atoms("0:1, 0.5:-1").unwrap(), vec![Atom::new(0.0, 1.0), Atom::new(0.5, -1.0)]);
        assert!(parse_atoms("0.5").is_err());
    }
}
