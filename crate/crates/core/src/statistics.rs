//! Observables, fiber reweighting and correlation decay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::FiberSystem;
use crate::measure::{Atom, FiberSpace};
use crate::rates::{fit_tail_rate, FIT_FLOOR};
use crate::symbolic::{theta_norm, CylinderFunction, PairSampling, SubshiftSpec};
use crate::transfer::{strong_norm, transfer_step, LeafwiseMeasure, NormReport};

pub const MC_BATCHES: usize = 20;

/// Functions of the fiber coordinate.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberFn {
    One,
    Z,
    Z2,
    /// Values at the points of a finite fiber.
    Table(Vec<f64>),
}

impl FiberFn {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            FiberFn::One => 1.0,
            FiberFn::Z => z,
            FiberFn::Z2 => z * z,
            FiberFn::Table(v) => v[z as usize],
        }
    }

    fn sup(&self, space: &FiberSpace) -> f64 {
        let m = match space {
            FiberSpace::Interval { lo, hi } => lo.abs().max(hi.abs()),
            FiberSpace::Finite { dist } => dist.len().saturating_sub(1) as f64,
        };
        match self {
            FiberFn::One => 1.0,
            FiberFn::Z => m,
            FiberFn::Z2 => m * m,
            FiberFn::Table(v) => v.iter().fold(0.0, |a, b| a.max(b.abs())),
        }
    }

    fn lipschitz(&self, space: &FiberSpace) -> f64 {
        match (self, space) {
            (FiberFn::One, _) => 0.0,
            (FiberFn::Z, FiberSpace::Interval { .. }) => 1.0,
            (FiberFn::Z2, FiberSpace::Interval { lo, hi }) => 2.0 * lo.abs().max(hi.abs()),
            // Finite positions are point indices, so `z` reads the index.
            (f, FiberSpace::Finite { dist }) => {
                let n = match f {
                    FiberFn::Table(v) => v.len().min(dist.len()),
                    _ => dist.len(),
                };
                let mut l = 0.0f64;
                for (p, row) in dist.iter().enumerate().take(n) {
                    for (q, d) in row.iter().enumerate().take(n).skip(p + 1) {
                        l = l.max((f.eval(p as f64) - f.eval(q as f64)).abs() / d);
                    }
                }
                l
            }
            _ => f64::INFINITY,
        }
    }
}

/// Functions of the base point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseFn {
    One,
    /// The first symbol `x0` as a number.
    FirstSymbol,
}

impl BaseFn {
    #[inline]
    pub fn eval(&self, x: &[usize]) -> f64 {
        match self {
            BaseFn::One => 1.0,
            BaseFn::FirstSymbol => x[0] as f64,
        }
    }
}

/// Lipschitz observables on `Σ⁺_A × K` with respect to `d_θ + d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Constant(f64),
    Fiber(FiberFn),
    Product { base: BaseFn, fiber: FiberFn },
    Combination(Vec<(f64, Observable)>),
}

impl Observable {
    pub fn z() -> Self {
        Observable::Fiber(FiberFn::Z)
    }

    pub fn z2() -> Self {
        Observable::Fiber(FiberFn::Z2)
    }

    /// Parses `z`, `z2` (or `z^2`), `x0`, `x0*z`, `x0*z2`, or a number.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        Ok(match t {
            "z" => Observable::z(),
            "z2" | "z^2" => Observable::z2(),
            "x0" => Observable::Product { base: BaseFn::FirstSymbol, fiber: FiberFn::One },
            "x0*z" | "x0z" => Observable::Product { base: BaseFn::FirstSymbol, fiber: FiberFn::Z },
            "x0*z2" | "x0*z^2" => Observable::Product { base: BaseFn::FirstSymbol, fiber: FiberFn::Z2 },
            "one" => Observable::Constant(1.0),
            other => Observable::Constant(
                crate::cli::config::parse_number(other)
                    .map_err(|_| Error::InvalidInput(format!("unknown observable {other:?}")))?,
            ),
        })
    }

    #[inline]
    pub fn eval(&self, x: &[usize], z: f64) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::Fiber(f) => f.eval(z),
            Observable::Product { base, fiber } => base.eval(x) * fiber.eval(z),
            Observable::Combination(parts) => parts.iter().map(|(c, o)| c * o.eval(x, z)).sum(),
        }
    }

    pub fn sup(&self, spec: &SubshiftSpec, space: &FiberSpace) -> f64 {
        match self {
            Observable::Constant(c) => c.abs(),
            Observable::Fiber(f) => f.sup(space),
            Observable::Product { base, fiber } => base_sup(base, spec) * fiber.sup(space),
            Observable::Combination(parts) => parts.iter().map(|(c, o)| c.abs() * o.sup(spec, space)).sum(),
        }
    }

    /// Lipschitz constant for `d_θ + d`. Base functions of the first symbol
    /// jump by at most `N − 1` between points at `d_θ ≥ 1`.
    pub fn lipschitz(&self, spec: &SubshiftSpec, space: &FiberSpace) -> f64 {
        match self {
            Observable::Constant(_) => 0.0,
            Observable::Fiber(f) => f.lipschitz(space),
            Observable::Product { base, fiber } => {
                let base_lip = match base {
                    BaseFn::One => 0.0,
                    BaseFn::FirstSymbol => (spec.alphabet() - 1) as f64,
                };
                let l = base_sup(base, spec) * fiber.lipschitz(space) + fiber.sup(space) * base_lip;
                if l.is_nan() { 0.0 } else { l }
            }
            Observable::Combination(parts) => parts.iter().map(|(c, o)| c.abs() * o.lipschitz(spec, space)).sum(),
        }
    }

    /// True when the value does not depend on the base point.
    pub fn is_fiber_only(&self) -> bool {
        match self {
            Observable::Constant(_) | Observable::Fiber(_) => true,
            Observable::Product { base, .. } => *base == BaseFn::One,
            Observable::Combination(parts) => parts.iter().all(|(_, o)| o.is_fiber_only()),
        }
    }
}

fn base_sup(base: &BaseFn, spec: &SubshiftSpec) -> f64 {
    match base {
        BaseFn::One => 1.0,
        BaseFn::FirstSymbol => (spec.alphabet() - 1) as f64,
    }
}

/// `f̄(w) = ∫ f(w, y) d(μ0|_w)(y)`.
pub fn observable_marginal(f: &Observable, mu0: &LeafwiseMeasure) -> Result<CylinderFunction> {
    if !mu0.is_positive() {
        return Err(Error::InvalidInput("marginals need a positive measure".into()));
    }
    let table = mu0.word_table();
    let values = (0..mu0.len())
        .into_par_iter()
        .map(|i| {
            let w = table.unrank(i);
            mu0.entry(i).iter().map(|a| a.weight * f.eval(&w, a.pos)).sum()
        })
        .collect();
    Ok(CylinderFunction { depth: mu0.depth(), values })
}

/// `f μ0`: every atom `(y, ω)` over `w` becomes `(y, ω f(w, y))`.
pub fn weighted_leafwise(f: &Observable, mu0: &LeafwiseMeasure) -> Result<LeafwiseMeasure> {
    mu0.map_entries(|w, atoms| atoms.iter().map(|a| Atom::new(a.pos, a.weight * f.eval(w, a.pos))).collect())
}

/// `∫ g dν` for a leafwise measure, evaluating `g` at cylinder words.
pub fn integrate(g: &Observable, nu: &LeafwiseMeasure) -> f64 {
    nu.integrate(|w, z| g.eval(w, z))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    /// `|C_n|` for `n = 0..=n_max`.
    pub values: Vec<f64>,
    pub signed_values: Vec<f64>,
    /// `None` when the sequence vanishes.
    pub fitted_rate: Option<f64>,
    pub xi: f64,
    pub bound_passed: bool,
    /// Smallest `K` with `|C_n| ≤ K ξ^n` for every `n`.
    pub prefactor_estimate: f64,
}

impl DecayReport {
    pub fn from_values(signed_values: Vec<f64>, xi: f64) -> Self {
        let values: Vec<f64> = signed_values.iter().map(|v| v.abs()).collect();
        let degenerate = values.iter().all(|&v| v <= FIT_FLOOR);
        let fitted_rate = if degenerate { None } else { fit_tail_rate(&values).map(|f| f.rate) };
        let prefactor_estimate = values
            .iter()
            .enumerate()
            .map(|(n, v)| v / xi.powi(n as i32))
            .fold(0.0, f64::max);
        let bound_passed = fitted_rate.is_none_or(|r| r <= xi + 0.05);
        Self { values, signed_values, fitted_rate, xi, bound_passed, prefactor_estimate }
    }

    /// `K ξ^n` for each `n`.
    pub fn bound_values(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|n| self.prefactor_estimate * self.xi.powi(n as i32))
            .collect()
    }
}

/// `C_n = |∫ g dF*^n(f μ0 − (∫f dμ0) μ0)|` for `n ≤ n_max`. With `μ0`
/// invariant this equals `|∫ (g∘F^n) f dμ0 − ∫g dμ0 ∫f dμ0|`; centering
/// before transport keeps the finite-resolution error from drifting with `n`.
pub fn correlation_sequence(
    sys: &FiberSystem,
    mu0: &LeafwiseMeasure,
    f: &Observable,
    g: &Observable,
    n_max: usize,
    delta: f64,
    xi: f64,
) -> Result<DecayReport> {
    if mu0.depth() < n_max + 1 {
        return Err(Error::InsufficientSymbols { needed: n_max + 1, available: mu0.depth() });
    }
    let weighted = weighted_leafwise(f, mu0)?;
    let mean_f = integrate(f, mu0);
    let mut cur = weighted.combine(1.0, mu0, -mean_f)?;
    let mut signed = Vec::with_capacity(n_max + 1);
    signed.push(integrate(g, &cur));
    for _ in 0..n_max {
        cur = transfer_step(sys, &cur, delta)?;
        signed.push(integrate(g, &cur));
    }
    Ok(DecayReport::from_values(signed, xi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Symbols appended after the current point so that `G` sees a long base
/// sequence.
const MC_LOOKAHEAD: usize = 48;

/// Monte Carlo estimate of `∫ f·(g∘F^n) dμ0 − ∫f dμ0 ∫g∘F^n dμ0`. Base
/// points follow the Markov chain; fiber points are pushed through
/// `burn_in` fiber maps along earlier symbols of the same chain. Batch `b`
/// draws from stream `b` of the seeded generator.
pub fn monte_carlo_correlation(
    sys: &FiberSystem,
    f: &Observable,
    g: &Observable,
    n: usize,
    samples: usize,
    burn_in: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 100 {
        return Err(Error::InvalidInput("Monte Carlo needs at least 100 samples".into()));
    }
    let per_batch = samples.div_ceil(MC_BATCHES);
    let batches: Vec<(f64, f64, f64)> = (0..MC_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let (mut sfg, mut sf, mut sg) = (0.0, 0.0, 0.0);
            let mut path = Vec::with_capacity(burn_in + n + MC_LOOKAHEAD);
            for _ in 0..per_batch {
                markov_path(sys.spec(), burn_in + n + MC_LOOKAHEAD, &mut rng, &mut path);
                let mut z = sys.space().random_point(&mut rng);
                for j in 0..burn_in {
                    z = sys.apply_sequence(&path[j..], z);
                }
                let x = &path[burn_in..];
                let fv = f.eval(x, z);
                for j in 0..n {
                    z = sys.apply_sequence(&x[j..], z);
                }
                let gv = g.eval(&x[n..], z);
                sfg += fv * gv;
                sf += fv;
                sg += gv;
            }
            let m = per_batch as f64;
            (sfg / m, sf / m, sg / m)
        })
        .collect();
    let estimates: Vec<f64> = batches.iter().map(|(fg, f, g)| fg - f * g).collect();
    let k = MC_BATCHES as f64;
    let mean_fg = batches.iter().map(|b| b.0).sum::<f64>() / k;
    let mean_f = batches.iter().map(|b| b.1).sum::<f64>() / k;
    let mean_g = batches.iter().map(|b| b.2).sum::<f64>() / k;
    let estimate = mean_fg - mean_f * mean_g;
    let avg = estimates.iter().sum::<f64>() / k;
    let var = estimates.iter().map(|e| (e - avg).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(McEstimate { estimate, stderr: (var / k).sqrt() })
}

/// Fills `path` with a stationary Markov chain of length `len`.
pub(crate) fn markov_path<R: Rng>(spec: &SubshiftSpec, len: usize, rng: &mut R, path: &mut Vec<usize>) {
    path.clear();
    path.push(sample_index(spec.stationary(), rng));
    while path.len() < len {
        let last = *path.last().unwrap();
        path.push(sample_index(spec.stochastic_row(last), rng));
    }
}

fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub norms: NormReport,
    pub finite: bool,
    /// `‖f̄‖_θ`.
    pub marginal_theta: f64,
    /// `|f̄|_θ`.
    pub marginal_lip: f64,
    /// `L(f)‖μ0‖∞ + max{L(f), ‖f‖∞}|μ0|_θ + L(f)θ^k/(1−θ)`.
    pub marginal_bound: f64,
    pub marginal_ok: bool,
}

/// Strong norm of `f μ0` and the Lipschitz bound on its marginal.
pub fn theta_membership(f: &Observable, mu0: &LeafwiseMeasure) -> Result<MembershipReport> {
    theta_membership_with(f, mu0, &strong_norm(mu0))
}

/// [`theta_membership`] with the norms of `μ0` already at hand.
pub fn theta_membership_with(f: &Observable, mu0: &LeafwiseMeasure, mu0_norms: &NormReport) -> Result<MembershipReport> {
    let spec = mu0.spec();
    let space = mu0.space();
    let weighted = weighted_leafwise(f, mu0)?;
    let norms = strong_norm(&weighted);
    let marginal = observable_marginal(f, mu0)?;
    let tn = theta_norm(spec, &marginal, PairSampling::default());
    let lip = f.lipschitz(spec, space);
    let sup = f.sup(spec, space);
    let theta = spec.theta();
    let marginal_bound = lip * mu0_norms.weak
        + lip.max(sup) * mu0_norms.lip_disint
        + lip * theta.powi(mu0.depth() as i32) / (1.0 - theta)
        + 1e-12;
    Ok(MembershipReport {
        finite: norms.strong.is_finite(),
        norms,
        marginal_theta: tn.norm,
        marginal_lip: tn.lip,
        marginal_bound,
        marginal_ok: tn.lip <= marginal_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::measure::FiniteSignedMeasure;
    use crate::transfer::invariant_measure;

    fn dyadic_mu0(depth: usize, steps: usize) -> (FiberSystem, LeafwiseMeasure) {
        let sys = catalog::dyadic();
        let d0 = FiniteSignedMeasure::dirac(sys.space().clone(), 0.0).unwrap();
        let mu0 = invariant_measure(&sys, depth, steps, 0.0, &d0).unwrap().measure;
        (sys, mu0)
    }

    #[test]
    fn marginals_of_dyadic_invariant_measure() {
        let (_, mu0) = dyadic_mu0(4, 12);
        let grid = 0.5 * 2f64.powi(-12);
        let zbar = observable_marginal(&Observable::z(), &mu0).unwrap();
        assert!(zbar.values.iter().all(|v| (v - 0.5).abs() <= grid));
        let one = observable_marginal(&Observable::Constant(1.0), &mu0).unwrap();
        assert!(one.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let z2 = observable_marginal(&Observable::z2(), &mu0).unwrap();
        assert!(z2.values.iter().all(|v| (v - 1.0 / 3.0).abs() <= 1e-3));
        assert!(observable_marginal(&Observable::z(), &mu0.scale(-1.0)).is_err());
    }

    #[test]
    fn reweighting_examples() {
        let sys = catalog::dyadic();
        let half = FiniteSignedMeasure::from_pairs(sys.space().clone(), &[(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let mu = LeafwiseMeasure::product(sys.spec().clone(), &half, 2).unwrap();
        let w = weighted_leafwise(&Observable::z(), &mu).unwrap();
        assert_eq!(w.entry(0), [Atom::new(1.0, 0.5)]);
        let marginal = observable_marginal(&Observable::z(), &mu).unwrap();
        assert_eq!(w.density().values, marginal.values);
        assert_eq!(weighted_leafwise(&Observable::Constant(1.0), &mu).unwrap(), mu);
        assert_eq!(weighted_leafwise(&Observable::Constant(0.0), &mu).unwrap().total_atoms(), 0);
    }

    #[test]
    fn dyadic_correlations_closed_form() {
        let (sys, mu0) = dyadic_mu0(9, 10);
        let r = correlation_sequence(&sys, &mu0, &Observable::z(), &Observable::z(), 8, 0.0, 0.84).unwrap();
        // Fibers are uniform on 1024 grid points: variance (1 − 1024^{−2})/12.
        let var = (1.0 - 1024f64.powi(-2)) / 12.0;
        for (n, v) in r.values.iter().enumerate() {
            let expect = var * 2f64.powi(-(n as i32));
            assert!((v - expect).abs() <= 1e-12, "n = {n}: {v} vs {expect}");
        }
        assert!((r.fitted_rate.unwrap() - 0.5).abs() < 1e-9);
        assert!(r.bound_passed);
        let flat = correlation_sequence(&sys, &mu0, &Observable::Constant(1.0), &Observable::z(), 4, 0.0, 0.84).unwrap();
        assert!(flat.values.iter().all(|&v| v < 1e-15) && flat.fitted_rate.is_none());
        let flat = correlation_sequence(&sys, &mu0, &Observable::z(), &Observable::Constant(1.0), 4, 0.0, 0.84).unwrap();
        assert!(flat.values.iter().all(|&v| v < 1e-14));
        assert!(matches!(
            correlation_sequence(&sys, &mu0, &Observable::z(), &Observable::z(), 9, 0.0, 0.84),
            Err(Error::InsufficientSymbols { needed: 10, available: 9 })
        ));
    }

    #[test]
    fn shifting_f_leaves_correlations_unchanged() {
        let (sys, mu0) = dyadic_mu0(6, 8);
        let f = Observable::z2();
        let shifted = Observable::Combination(vec![(1.0, f.clone()), (1.0, Observable::Constant(0.7))]);
        let a = correlation_sequence(&sys, &mu0, &f, &Observable::z(), 5, 0.0, 0.84).unwrap();
        let b = correlation_sequence(&sys, &mu0, &shifted, &Observable::z(), 5, 0.0, 0.84).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let sys = catalog::dyadic();
        let mc = monte_carlo_correlation(&sys, &Observable::z(), &Observable::z(), 3, 40_000, 60, 7).unwrap();
        let expect = 2f64.powi(-3) / 12.0;
        assert!((mc.estimate - expect).abs() <= 3.0 * mc.stderr + 1e-4, "{mc:?}");
        let zero = monte_carlo_correlation(&sys, &Observable::Constant(2.0), &Observable::z(), 3, 2000, 60, 1).unwrap();
        assert!(zero.estimate.abs() < 1e-12);
        let var = monte_carlo_correlation(&sys, &Observable::z(), &Observable::z(), 0, 40_000, 60, 2).unwrap();
        assert!((var.estimate - 1.0 / 12.0).abs() <= 3.0 * var.stderr + 1e-4);
        assert!(monte_carlo_correlation(&sys, &Observable::z(), &Observable::z(), 0, 10, 60, 2).is_err());
    }

    #[test]
    fn membership_reports() {
        let (_, mu0) = dyadic_mu0(6, 10);
        let r = theta_membership(&Observable::z(), &mu0).unwrap();
        assert!(r.finite && r.marginal_ok);
        assert!((r.marginal_theta - 0.5).abs() < 1e-3);
        let one = theta_membership(&Observable::Constant(1.0), &mu0).unwrap();
        assert!((one.norms.strong - 2.0).abs() < 1e-9);
        assert!(theta_membership(&Observable::z2(), &mu0).unwrap().finite);
    }

    #[test]
    fn observable_constants() {
        let sys = catalog::dyadic();
        let (spec, space) = (sys.spec(), sys.space());
        assert_eq!(Observable::z().lipschitz(spec, space), 1.0);
        assert_eq!(Observable::z2().lipschitz(spec, space), 2.0);
        let xz = Observable::parse("x0*z").unwrap();
        assert_eq!(xz.eval(&[1, 0], 0.25), 0.25);
        assert_eq!(xz.lipschitz(spec, space), 2.0);
        assert_eq!(Observable::parse("2/3").unwrap(), Observable::Constant(2.0 / 3.0));
        assert!(Observable::parse("sin").is_err());
    }
}
