//! Acceptance checks. Runs without the libtest harness so that every check
//! prints exactly one `PASS`/`FAIL` line; the process fails if any check does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fiberlab::catalog;
use fiberlab::fiber::FiberSystem;
use fiberlab::ifs::{annealed_correlation, chaos_game, product_structure_check, AnnealedOptions, IfsSpec};
use fiberlab::lifting::{envelope_sequence, invariance_check, lifted_value};
use fiberlab::measure::{wk_distance, wk_oracle, FiberSpace, FiniteSignedMeasure};
use fiberlab::statistics::{correlation_sequence, Observable};
use fiberlab::symbolic::{estimate_basis_gap, perron_frobenius};
use fiberlab::transfer::{
    bound_constants, equilibrium_rate, invariant_measure, lasota_yorke_check, strong_norm, transfer_step,
    BoundConstants, LeafwiseMeasure,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<(bool, String), String>;

fn left_end(sys: &FiberSystem) -> FiniteSignedMeasure {
    let start = match sys.space().as_ref() {
        FiberSpace::Interval { lo, .. } => *lo,
        FiberSpace::Finite { .. } => 0.0,
    };
    FiniteSignedMeasure::dirac(sys.space().clone(), start).unwrap()
}

fn measured_constants(sys: &FiberSystem, seed: u64) -> Result<BoundConstants, String> {
    let gap = estimate_basis_gap(sys.spec(), 8, 6, 8, seed).map_err(|e| e.to_string())?;
    Ok(bound_constants(sys, gap.r))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn invariant_norms() -> Result<(bool, String), String> {
    let sys = catalog::dyadic();
    let run = invariant_measure(&sys, 4, 12, 2f64.powi(-12), &left_end(&sys)).map_err(err)?;
    let n = strong_norm(&run.measure);
    let ok = (1.0 - 1e-9..=1.0).contains(&n.weak) && (n.strong - 2.0).abs() <= 1e-6;
    Ok((ok, format!("weak {:.12}, strong {:.9}", n.weak, n.strong)))
}

fn dyadic_closed_form() -> Result<(bool, String), String> {
    let sys = catalog::dyadic();
    let delta = 0.0;
    let run = invariant_measure(&sys, 11, 10, delta, &left_end(&sys)).map_err(err)?;
    let report = correlation_sequence(&sys, &run.measure, &Observable::z(), &Observable::z(), 10, delta, 0.84)
        .map_err(err)?;
    let mut worst = 0.0f64;
    let mut ok = true;
    for (n, &c) in report.signed_values.iter().enumerate() {
        let exact = 2f64.powi(-(n as i32)) / 12.0;
        let tol = (0.02 * exact).max(n as f64 * delta);
        worst = worst.max((c - exact).abs() / exact);
        ok &= (c - exact).abs() <= tol;
    }
    let rate = report.fitted_rate.unwrap_or(f64::NAN);
    ok &= (0.48..=0.52).contains(&rate);
    Ok((ok, format!("worst relative error {worst:.2e}, fitted rate {rate:.5}")))
}

fn decay_rate_bound() -> Result<(bool, String), String> {
    let observables = ["z", "z2", "x0*z"];
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut fitted = 0;
    let n_max = 8;
    for (name, sys) in catalog::all() {
        let c = measured_constants(&sys, 7)?;
        let delta = if sys.is_first_symbol() || !sys.space().is_interval() { 0.0 } else { 2f64.powi(-10) };
        let run = invariant_measure(&sys, n_max + 1, 12, delta, &left_end(&sys)).map_err(err)?;
        for f in observables {
            let obs = Observable::parse(f).map_err(err)?;
            let r = correlation_sequence(&sys, &run.measure, &obs, &obs, n_max, delta, c.xi).map_err(err)?;
            if let Some(rate) = r.fitted_rate {
                fitted += 1;
                worst = worst.max(rate - c.xi);
            }
            if !r.bound_passed {
                ok = false;
                eprintln!("  {name} / {f}: rate {:?} above xi {:.4} + 0.05", r.fitted_rate, c.xi);
            }
        }
    }
    Ok((ok, format!("{fitted} fitted pairs, largest rate - xi {worst:.4}")))
}

fn lipschitz_regularity() -> Result<(bool, String), String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for sys in [catalog::dyadic(), catalog::sequence_affine()] {
        let run = invariant_measure(&sys, 7, 10, 0.0, &left_end(&sys)).map_err(err)?;
        let lip = strong_norm(&run.measure).lip_disint;
        let bound = bound_constants(&sys, 0.0).lip_bound;
        ok &= lip <= bound + 1e-9;
        parts.push((lip, bound));
    }
    let (dyadic, seq) = (parts[0], parts[1]);
    ok &= dyadic.0 <= 1e-9 && seq.0 > 0.0;
    Ok((
        ok,
        format!("dyadic {:.2e} <= {}, sequence-affine {:.4} <= {}", dyadic.0, dyadic.1, seq.0, seq.1),
    ))
}

fn lasota_yorke_chain() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = true;
    let mut worst = f64::INFINITY;
    let mut runs = 0;
    for (name, sys) in catalog::all() {
        let delta = if sys.space().is_interval() { 2f64.powi(-12) } else { 0.0 };
        let depth = 11;
        let mut starts = vec![LeafwiseMeasure::product(sys.spec().clone(), &left_end(&sys), depth).map_err(err)?];
        for _ in 0..5 {
            starts.push(
                LeafwiseMeasure::random_signed(sys.spec().clone(), sys.space().clone(), depth, 4, &mut rng)
                    .map_err(err)?,
            );
        }
        for mu in &starts {
            let r = lasota_yorke_check(&sys, mu, 10, delta).map_err(err)?;
            runs += 1;
            for row in &r.rows {
                worst = worst.min(row.margin.min(row.step_margin));
            }
            if !r.passed {
                ok = false;
                eprintln!("  {name}: margins {:?}", r.rows.iter().map(|x| x.margin).collect::<Vec<_>>());
            }
        }
    }
    Ok((ok, format!("{runs} chains of 10 steps, smallest margin {worst:.3e}")))
}

fn equilibrium() -> Result<(bool, String), String> {
    let sys = catalog::dyadic();
    let c = measured_constants(&sys, 7)?;
    let depth = 11;
    let reference = LeafwiseMeasure::product(sys.spec().clone(), &left_end(&sys), depth).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rates = Vec::new();
    let mut ok = true;
    for _ in 0..5 {
        let mu = LeafwiseMeasure::random_signed(sys.spec().clone(), sys.space().clone(), depth, 4, &mut rng)
            .and_then(|m| m.centered(&reference))
            .map_err(err)?;
        let r = equilibrium_rate(&sys, &mu, 10, 0.0, c.r).map_err(err)?;
        ok &= r.passed;
        rates.push(r.fitted_rate.unwrap_or(0.0));
    }
    let max = rates.iter().cloned().fold(0.0, f64::max);
    Ok((ok, format!("largest fitted rate {max:.4}, beta1 {:.4}", c.beta1)))
}

fn flat_metric() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let step = 0.02;
    let space = std::sync::Arc::new(FiberSpace::unit());
    let random = |rng: &mut ChaCha8Rng, max: usize| {
        let k = rng.gen_range(1..=max);
        let pairs: Vec<(f64, f64)> = (0..k).map(|_| (rng.gen_range(0.0..=1.0), rng.gen_range(-1.0..=1.0))).collect();
        FiniteSignedMeasure::from_pairs(space.clone(), &pairs).unwrap()
    };
    let mut worst_oracle = 0.0f64;
    let mut ok = true;
    for _ in 0..200 {
        let mu = random(&mut rng, 4);
        let oracle = wk_oracle(&space, mu.atoms(), step).map_err(err)?;
        let gap = (mu.wk_norm() - oracle).abs();
        worst_oracle = worst_oracle.max(gap / (mu.len().max(1) as f64 * step));
        ok &= gap <= mu.len() as f64 * step + 1e-12;
    }
    let mut worst_axiom = 0.0f64;
    for _ in 0..200 {
        let (a, b, c) = (random(&mut rng, 6), random(&mut rng, 6), random(&mut rng, 6));
        let s: f64 = rng.gen_range(-3.0..3.0);
        let violations = [
            wk_distance(&a, &c) - wk_distance(&a, &b) - wk_distance(&b, &c),
            (wk_distance(&a, &b) - wk_distance(&b, &a)).abs(),
            (a.scaled(s).wk_norm() - s.abs() * a.wk_norm()).abs(),
            -a.wk_norm(),
            wk_distance(&a, &a),
        ];
        let v = violations.iter().cloned().fold(0.0, f64::max);
        worst_axiom = worst_axiom.max(v);
        ok &= v <= 1e-8 && (a.is_empty() || a.wk_norm() > 0.0);
    }
    Ok((
        ok,
        format!("oracle gap at most {worst_oracle:.3} of n*step, worst axiom violation {worst_axiom:.1e}"),
    ))
}

fn marginal_intertwining() -> Result<(bool, String), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for sys in [catalog::dyadic(), catalog::sequence_affine()] {
        for _ in 0..20 {
            let depth = rng.gen_range(2..=8);
            let mu = LeafwiseMeasure::random_signed(sys.spec().clone(), sys.space().clone(), depth, 4, &mut rng)
                .map_err(err)?;
            let got = transfer_step(&sys, &mu, 0.0).map_err(err)?.density();
            let want = perron_frobenius(sys.spec(), &mu.density()).map_err(err)?;
            for (a, b) in got.values.iter().zip(&want.values) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("largest entrywise difference {worst:.1e}")))
}

fn ifs_product_structure() -> Result<(bool, String), String> {
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [vec![0.5, 0.5], vec![2.0 / 3.0, 1.0 / 3.0]] {
        let ifs = IfsSpec::new(vec![(0.5, 0.0), (0.5, 0.5)], p).map_err(err)?;
        let sys = ifs.skew_product(0.5).map_err(err)?;
        let hutchinson = chaos_game(&ifs, 100_000, 100, 11, 2f64.powi(-12)).map_err(err)?;
        let mu0 = invariant_measure(&sys, 4, 12, 0.0, &left_end(&sys)).map_err(err)?.measure;
        let d = product_structure_check(&sys, &ifs, &mu0, &hutchinson).map_err(err)?;
        ok &= d <= 0.03;
        parts.push(format!("{d:.4}"));
    }
    Ok((ok, format!("distances {} (limit 0.03)", parts.join(", "))))
}

fn annealed_decay() -> Result<(bool, String), String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, p) in [("uniform", vec![0.5, 0.5]), ("weighted", vec![2.0 / 3.0, 1.0 / 3.0])] {
        let ifs = IfsSpec::new(vec![(0.5, 0.0), (0.5, 0.5)], p).map_err(err)?;
        let c = measured_constants(&ifs.skew_product(0.5).map_err(err)?, 7)?;
        let opts = AnnealedOptions { slack: 0.0, ..AnnealedOptions::default() };
        let r = annealed_correlation(&ifs, &Observable::z(), &Observable::z(), 10, 100_000, 7, c.xi, opts)
            .map_err(err)?;
        let worst = r
            .rows
            .iter()
            .map(|row| (row.monte_carlo - row.transfer).abs() / row.stderr.max(1e-300))
            .fold(0.0, f64::max);
        ok &= r.agreement_passed && r.bound_passed;
        parts.push(format!(
            "{label}: worst |mc - transfer| {worst:.2} stderr, rate {:.4} vs xi {:.4}",
            r.fitted_rate.unwrap_or(f64::NAN),
            r.xi
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn lifting() -> Result<(bool, String), String> {
    let n_max = 10;
    let depth = n_max + 4;
    let mut ok = true;
    let mut checked = 0;
    for (name, sys) in catalog::all() {
        for psi in ["z", "z2", "0.7"] {
            let psi = Observable::parse(psi).map_err(err)?;
            for e in envelope_sequence(&sys, &psi, n_max, depth, 3).map_err(err)? {
                checked += 1;
                if e.gap > e.bound {
                    ok = false;
                    eprintln!("  {name}: gap {} above bound {} at n = {}", e.gap, e.bound, e.n);
                }
            }
            let inv = invariance_check(&sys, &psi, n_max, depth, 3).map_err(err)?;
            if !(inv.invariance_passed && inv.marginal_passed) {
                ok = false;
                eprintln!("  {name}: {inv:?}");
            }
        }
    }
    let v = lifted_value(&catalog::dyadic(), &Observable::z(), n_max, depth, 3).map_err(err)?;
    let half = (v.value - 0.5).abs();
    ok &= half <= 2f64.powi(-(n_max as i32));
    Ok((ok, format!("{checked} envelope gaps within bound, |lifted(z) - 1/2| = {half:.2e}")))
}

fn determinism() -> Result<(bool, String), String> {
    let exe = env!("CARGO_BIN_EXE_fiberlab");
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let dir = tempfile::tempdir().map_err(err)?;
    let dyadic = configs.join("dyadic.cfg");
    let seq = configs.join("sequence_affine.cfg");
    let runs: Vec<Vec<&str>> = vec![
        vec!["invariant", "--config", dyadic.to_str().unwrap()],
        vec!["decay", "--config", seq.to_str().unwrap(), "--nmax", "6"],
        vec!["regularity", "--config", seq.to_str().unwrap()],
        vec!["constants", "--config", dyadic.to_str().unwrap()],
        vec!["gap", "--config", dyadic.to_str().unwrap()],
        vec!["equilibrium", "--config", dyadic.to_str().unwrap(), "--nmax", "8"],
        vec!["lift", "--config", seq.to_str().unwrap()],
        vec!["ifs-decay", "--config", dyadic.to_str().unwrap(), "--nmax", "6", "--samples", "20000"],
        vec!["certify", "--config", seq.to_str().unwrap()],
        vec!["wk-dist", "--a", "0:1,0.3:-0.5", "--b", "1:0.5"],
    ];
    let mut identical = 0;
    for args in &runs {
        let mut outputs = Vec::new();
        for tag in ["a", "b"] {
            let csv = dir.path().join(format!("{}-{tag}.csv", args[0]));
            let json = dir.path().join(format!("{}-{tag}.json", args[0]));
            let status = Command::new(exe)
                .args(args)
                .args(["--csv", csv.to_str().unwrap(), "--json", json.to_str().unwrap()])
                .output()
                .map_err(err)?
                .status;
            if status.code() != Some(0) {
                return Ok((false, format!("{} exited with {status}", args[0])));
            }
            outputs.push((std::fs::read(&csv).map_err(err)?, std::fs::read(&json).map_err(err)?));
        }
        if outputs[0] != outputs[1] {
            return Ok((false, format!("{} produced different bytes", args[0])));
        }
        identical += 1;
    }
    Ok((identical == runs.len(), format!("{identical} commands byte-identical across two runs")))
}

fn main() {
    let checks: [(&str, &str, Check, u64); 12] = [
        ("AC1", "invariant-measure norms", invariant_norms, 10),
        ("AC2", "dyadic closed-form correlations", dyadic_closed_form, 30),
        ("AC3", "decay-rate bound", decay_rate_bound, 120),
        ("AC4", "Lipschitz-disintegration bound", lipschitz_regularity, 60),
        ("AC5", "Lasota-Yorke chain", lasota_yorke_chain, 30),
        ("AC6", "equilibrium rate", equilibrium, 60),
        ("AC7", "flat-metric correctness", flat_metric, 60),
        ("AC8", "marginal intertwining", marginal_intertwining, 60),
        ("AC9", "IFS product structure", ifs_product_structure, 60),
        ("AC10", "annealed IFS decay", annealed_decay, 120),
        ("AC11", "lifting", lifting, 60),
        ("AC12", "determinism", determinism, 300),
    ];
    let mut failed = 0;
    for (id, title, check, limit) in checks {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{id:<4} {} {title}: {detail} [{:.1}s, limit {limit}s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
