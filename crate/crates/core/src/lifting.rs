//! The lifted invariant measure built from sup/inf envelopes of `ψ∘F^n`
//! over fibers, integrated against the Markov measure.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::FiberSystem;
use crate::statistics::{BaseFn, FiberFn, Observable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopePair {
    pub n: usize,
    /// `Σ_w m([w]) max_z ψ(F^n(rep(w), z))`.
    pub upper: f64,
    pub lower: f64,
    pub gap: f64,
    /// `L(ψ)·diam·α^n + 2 L(ψ) θ^k / (1 − θ)`.
    pub bound: f64,
    /// How far either envelope can sit from its value for base points
    /// drawn from `m` rather than cylinder representatives. Zero when the
    /// fiber maps read only the first symbol.
    pub representative_slack: f64,
}

/// Envelopes of `ψ∘F^n` at depth `k ≥ n + 2` with `s ≥ 2` fiber points per
/// cylinder (endpoints and equispaced interior points; every point of a
/// finite fiber). Affine fibers map the sampled endpoints to the endpoints of
/// the image, so monotone `ψ` attain their extremes on the sample.
pub fn envelope(sys: &FiberSystem, psi: &Observable, n: usize, k: usize, s: usize) -> Result<EnvelopePair> {
    if k < n + 2 {
        return Err(Error::InsufficientSymbols { needed: n + 2, available: k });
    }
    if s < 2 {
        return Err(Error::InvalidInput("need at least two fiber points".into()));
    }
    let spec = sys.spec();
    let table = spec.word_table(k)?;
    let points = sys.space().sample_points(s);
    let parts: Vec<(f64, f64)> = (0..table.len())
        .into_par_iter()
        .map_init(Vec::new, |w, i| {
            table.unrank_into(i, w);
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for &z0 in &points {
                let mut z = z0;
                for j in 0..n {
                    z = sys.fiber_map(&w[j..]).apply(z);
                }
                let v = psi.eval(&w[n..], z);
                hi = hi.max(v);
                lo = lo.min(v);
            }
            let mass = spec.mass_of(w);
            (mass * hi, mass * lo)
        })
        .collect();
    let upper: f64 = parts.iter().map(|p| p.0).sum();
    let lower: f64 = parts.iter().map(|p| p.1).sum();
    let lip = psi.lipschitz(spec, sys.space());
    let theta = spec.theta();
    let bound = lip * sys.space().diameter() * sys.alpha().powi(n as i32)
        + 2.0 * lip * theta.powi(k as i32) / (1.0 - theta)
        + 1e-12;
    let alpha = sys.alpha();
    let representative_slack = lip
        * (0..n)
            .map(|j| alpha.powi((n - 1 - j) as i32) * sys.representative_error(k - j))
            .sum::<f64>();
    Ok(EnvelopePair { n, upper, lower, gap: upper - lower, bound, representative_slack })
}

/// Envelopes for `n = 0..=n_max` at a common depth.
pub fn envelope_sequence(sys: &FiberSystem, psi: &Observable, n_max: usize, k: usize, s: usize) -> Result<Vec<EnvelopePair>> {
    (0..=n_max).map(|n| envelope(sys, psi, n, k, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiftedValue {
    /// The lower envelope at `n_max`.
    pub value: f64,
    /// Certified error: the envelope gap at `n_max`.
    pub gap: f64,
}

/// `μ0(ψ)` approximated by the lower envelope at `n_max`.
pub fn lifted_value(sys: &FiberSystem, psi: &Observable, n_max: usize, k: usize, s: usize) -> Result<LiftedValue> {
    let e = envelope(sys, psi, n_max, k, s)?;
    Ok(LiftedValue { value: e.lower, gap: e.gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub value: f64,
    /// Lifted value of `ψ∘F`, the lower envelope one step further.
    pub shifted_value: f64,
    pub difference: f64,
    pub gap: f64,
    pub invariance_passed: bool,
    /// Lifted value of the first-symbol observable.
    pub marginal_value: f64,
    /// `Σ_s p_s s`.
    pub marginal_expected: f64,
    pub marginal_passed: bool,
}

/// Compares the lifted values of `ψ` and `ψ∘F` (needs `k ≥ n_max + 3`) and
/// checks that the first-symbol observable lifts to its base integral.
pub fn invariance_check(sys: &FiberSystem, psi: &Observable, n_max: usize, k: usize, s: usize) -> Result<InvarianceReport> {
    if k < n_max + 3 {
        return Err(Error::InsufficientSymbols { needed: n_max + 3, available: k });
    }
    let base = envelope(sys, psi, n_max, k, s)?;
    let shifted = envelope(sys, psi, n_max + 1, k, s)?;
    let difference = (shifted.lower - base.lower).abs();
    let slack = 1e-9 + base.representative_slack + shifted.representative_slack;
    let first = Observable::Product { base: BaseFn::FirstSymbol, fiber: FiberFn::One };
    let marginal = envelope(sys, &first, n_max, k, s)?;
    let spec = sys.spec();
    let marginal_expected: f64 = spec.stationary().iter().enumerate().map(|(i, p)| i as f64 * p).sum();
    Ok(InvarianceReport {
        value: base.lower,
        shifted_value: shifted.lower,
        difference,
        gap: base.gap,
        invariance_passed: difference <= 2.0 * base.gap + slack,
        marginal_value: marginal.lower,
        marginal_expected,
        marginal_passed: (marginal.lower - marginal_expected).abs() <= slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn dyadic_envelopes() {
        let sys = catalog::dyadic();
        for n in 0..6 {
            let e = envelope(&sys, &Observable::z(), n, n + 2, 2).unwrap();
            assert!((e.gap - 2f64.powi(-(n as i32))).abs() < 1e-12, "n = {n}: {e:?}");
            assert!(e.gap <= e.bound);
        }
        let e0 = envelope(&sys, &Observable::z(), 0, 2, 3).unwrap();
        assert_eq!((e0.upper, e0.lower), (1.0, 0.0));
        let c = envelope(&sys, &Observable::Constant(0.3), 4, 7, 2).unwrap();
        assert!((c.upper - 0.3).abs() < 1e-15 && (c.lower - 0.3).abs() < 1e-15);
        assert!(envelope(&sys, &Observable::z(), 5, 6, 2).is_err());
        assert!(envelope(&sys, &Observable::z(), 1, 6, 1).is_err());
    }

    #[test]
    fn lifted_values() {
        let sys = catalog::dyadic();
        let v = lifted_value(&sys, &Observable::z(), 10, 12, 2).unwrap();
        assert!((v.value - 0.5).abs() <= 2f64.powi(-10));
        assert!((lifted_value(&sys, &Observable::Constant(1.0), 3, 5, 2).unwrap().value - 1.0).abs() < 1e-14);
        let sq = lifted_value(&sys, &Observable::z2(), 10, 12, 2).unwrap();
        assert!((sq.value - 1.0 / 3.0).abs() <= sq.gap + 1e-9);
    }

    #[test]
    fn invariance_and_marginal() {
        let sys = catalog::dyadic();
        let r = invariance_check(&sys, &Observable::z(), 8, 11, 2).unwrap();
        assert!(r.invariance_passed && r.marginal_passed, "{r:?}");
        assert!((r.marginal_value - 0.5).abs() < 1e-12);
        let c = invariance_check(&sys, &Observable::Constant(2.0), 3, 6, 2).unwrap();
        assert!(c.difference < 1e-14);
        assert!(invariance_check(&sys, &Observable::z(), 8, 10, 2).is_err());
    }

    #[test]
    fn lower_envelope_is_monotone() {
        let sys = catalog::sequence_affine();
        let seq = envelope_sequence(&sys, &Observable::z(), 8, 16, 3).unwrap();
        for w in seq.windows(2) {
            let slack = w[0].representative_slack + w[1].representative_slack + 1e-6;
            assert!(w[1].lower >= w[0].lower - slack, "{w:?}");
            assert!(w[1].gap <= w[0].gap + 1e-6);
        }
        assert!(seq.iter().all(|e| e.gap <= e.bound));
    }
}
