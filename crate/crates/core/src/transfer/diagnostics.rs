use serde::Serialize;

use super::{transfer_step, weak_norm, LeafwiseMeasure};
use crate::error::{Error, Result};
use crate::fiber::FiberSystem;
use crate::rates::fit_tail_rate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LasotaYorkeRow {
    pub j: usize,
    /// `‖F*^j μ‖∞`.
    pub weak: f64,
    /// `α^j ‖μ‖∞ + |φ1|∞ / (1 − α) + slack_j`.
    pub bound: f64,
    pub margin: f64,
    /// `‖F*^{j−1} μ‖∞ + δ·V − ‖F*^j μ‖∞`, the one-step non-expansion margin.
    pub step_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LasotaYorkeReport {
    pub initial_weak: f64,
    pub density_sup: f64,
    pub rows: Vec<LasotaYorkeRow>,
    pub passed: bool,
}

/// Checks the iterated weak-norm inequality and single-step non-expansion
/// along `n` steps. Compression slack per step is `δ` times the largest
/// entry variation of `μ`, which no step can increase.
pub fn lasota_yorke_check(
    sys: &FiberSystem,
    mu: &LeafwiseMeasure,
    n: usize,
    delta: f64,
) -> Result<LasotaYorkeReport> {
    if mu.depth() < n + 1 {
        return Err(Error::InsufficientSymbols { needed: n + 1, available: mu.depth() });
    }
    let alpha = sys.alpha();
    let initial_weak = weak_norm(mu);
    let density_sup = mu.density().sup();
    let per_step_slack = delta * mu.max_variation();
    let mut rows = Vec::with_capacity(n);
    let mut cur = mu.clone();
    let mut prev_weak = initial_weak;
    for j in 1..=n {
        cur = transfer_step(sys, &cur, delta)?;
        let weak = weak_norm(&cur);
        let bound = alpha.powi(j as i32) * initial_weak
            + density_sup / (1.0 - alpha)
            + j as f64 * per_step_slack;
        rows.push(LasotaYorkeRow {
            j,
            weak,
            bound,
            margin: bound - weak,
            step_margin: prev_weak + per_step_slack - weak,
        });
        prev_weak = weak;
    }
    let passed = rows.iter().all(|r| r.margin >= -1e-12 && r.step_margin >= -1e-12);
    Ok(LasotaYorkeReport { initial_weak, density_sup, rows, passed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// `‖F*^j μ‖∞` for `j = 0..=n`.
    pub norms: Vec<f64>,
    /// `None` when the norms vanish and no rate can be fitted.
    pub fitted_rate: Option<f64>,
    pub beta1: f64,
    pub passed: bool,
}

/// Weak-norm decay of a zero-average measure, compared with
/// `β1 = max{√α, √r}`.
pub fn equilibrium_rate(
    sys: &FiberSystem,
    mu: &LeafwiseMeasure,
    n: usize,
    delta: f64,
    measured_r: f64,
) -> Result<EquilibriumReport> {
    let average = mu.global_mass();
    if average.abs() > 1e-10 {
        return Err(Error::NotZeroAverage(average));
    }
    if mu.depth() < n + 1 {
        return Err(Error::InsufficientSymbols { needed: n + 1, available: mu.depth() });
    }
    let beta1 = sys.alpha().sqrt().max(measured_r.sqrt());
    let mut norms = vec![weak_norm(mu)];
    let mut cur = mu.clone();
    for _ in 0..n {
        cur = transfer_step(sys, &cur, delta)?;
        norms.push(weak_norm(&cur));
    }
    let fitted_rate = fit_tail_rate(&norms).map(|f| f.rate);
    let passed = fitted_rate.is_none_or(|r| r <= beta1 + 0.05);
    Ok(EquilibriumReport { norms, fitted_rate, beta1, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub alpha: f64,
    pub h: f64,
    pub n: usize,
    pub theta: f64,
    /// Largest θ-Lipschitz constant among the branch weights.
    pub g_theta: f64,
    /// Sum of the branch constants, the alternative reading.
    pub g_theta_sum: f64,
    pub c1: f64,
    /// `C1` computed with [`BoundConstants::g_theta_sum`].
    pub c1_sum: f64,
    pub r: f64,
    pub beta1: f64,
    pub lambda0: f64,
    pub xi: f64,
    /// `C1 / (1 − θ)`.
    pub lip_bound: f64,
}

/// Plugs the system constants and a measured basis rate `r` into the
/// regularity and decay bounds.
pub fn bound_constants(sys: &FiberSystem, measured_r: f64) -> BoundConstants {
    let spec = sys.spec();
    let n = spec.alphabet();
    let theta = spec.theta();
    // w ↦ g_i(i·w) depends on w0 only, and distinct first symbols are at
    // distance 1, so the constant is the largest jump over admissible w0.
    let branch: Vec<f64> = (0..n)
        .map(|i| {
            let allowed: Vec<usize> = (0..n).filter(|&w0| spec.allowed(i, w0)).collect();
            let mut lip = 0.0f64;
            for &a in &allowed {
                for &b in &allowed {
                    lip = lip.max((spec.branch_weight(i, a) - spec.branch_weight(i, b)).abs());
                }
            }
            lip
        })
        .collect();
    let g_theta = branch.iter().fold(0.0f64, |m, &v| m.max(v));
    let g_theta_sum: f64 = branch.iter().sum();
    let h = sys.h();
    let c1 = (h * theta + theta * n as f64 * g_theta).max(2.0);
    let c1_sum = (h * theta + theta * n as f64 * g_theta_sum).max(2.0);
    let alpha = sys.alpha();
    let beta1 = alpha.sqrt().max(measured_r.sqrt());
    let lambda0 = beta1.max(theta);
    BoundConstants {
        alpha,
        h,
        n,
        theta,
        g_theta,
        g_theta_sum,
        c1,
        c1_sum,
        r: measured_r,
        beta1,
        lambda0,
        xi: lambda0.sqrt(),
        lip_bound: c1 / (1.0 - theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::measure::FiniteSignedMeasure;

    #[test]
    fn dyadic_constants() {
        let c = bound_constants(&catalog::dyadic(), 0.5);
        assert_eq!((c.g_theta, c.c1, c.lip_bound), (0.0, 2.0, 4.0));
        assert!((c.beta1 - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((c.xi - 0.8409).abs() < 1e-4);
    }

    #[test]
    fn golden_branch_weights_vary() {
        let c = bound_constants(&catalog::golden_cantor(), 0.5);
        // Branch 0 into w0 ∈ {0, 1}: weights ½ and 1.
        assert!((c.g_theta - 0.5).abs() < 1e-12);
        assert!(c.c1 >= 2.0);
    }

    #[test]
    fn lasota_yorke_first_step_by_hand() {
        let sys = catalog::dyadic();
        let d0 = FiniteSignedMeasure::dirac(sys.space().clone(), 0.0).unwrap();
        let mu = LeafwiseMeasure::product(sys.spec().clone(), &d0, 6).unwrap();
        let r = lasota_yorke_check(&sys, &mu, 1, 0.0).unwrap();
        assert_eq!(r.rows[0].weak, 1.0);
        assert_eq!(r.rows[0].bound, 2.5);
        assert!(r.passed);
        let zero = mu.scale(0.0);
        assert!(lasota_yorke_check(&sys, &zero, 3, 0.0).unwrap().passed);
    }

    #[test]
    fn dipole_equilibrates_at_fiber_rate() {
        let sys = catalog::dyadic();
        let space = sys.space().clone();
        let dipole = FiniteSignedMeasure::from_pairs(space, &[(0.0, 1.0), (1.0, -1.0)]).unwrap();
        let mu = LeafwiseMeasure::constant_family(sys.spec().clone(), &dipole, 10).unwrap();
        let r = equilibrium_rate(&sys, &mu, 8, 0.0, 0.5).unwrap();
        assert!((r.fitted_rate.unwrap() - 0.5).abs() < 1e-9);
        assert!(r.passed);
        let zero = mu.scale(0.0);
        let z = equilibrium_rate(&sys, &zero, 3, 0.0, 0.5).unwrap();
        assert!(z.fitted_rate.is_none() && z.passed);
        let d0 = FiniteSignedMeasure::dirac(sys.space().clone(), 0.0).unwrap();
        let prob = LeafwiseMeasure::product(sys.spec().clone(), &d0, 4).unwrap();
        assert!(matches!(equilibrium_rate(&sys, &prob, 2, 0.0, 0.5), Err(Error::NotZeroAverage(_))));
    }
}
