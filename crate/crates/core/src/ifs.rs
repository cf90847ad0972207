//! Iterated function systems on `[0, 1]` and their skew-product lift.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::{FiberKind, FiberSystem};
use crate::measure::{compress_atoms, normalize_atoms, wk_norm, Atom, FiberSpace, FiniteSignedMeasure};
use crate::rates::fit_tail_rate;
use crate::statistics::{correlation_sequence, Observable, MC_BATCHES};
use crate::transfer::LeafwiseMeasure;

pub const MIN_CHAOS_SAMPLES: usize = 1000;
pub const MIN_BURN_IN: usize = 100;

/// Affine contractions `z ↦ a_i z + b_i` of the unit interval chosen with
/// probabilities `p_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IfsSpec {
    maps: Vec<(f64, f64)>,
    probabilities: Vec<f64>,
}

impl IfsSpec {
    pub fn new(maps: Vec<(f64, f64)>, probabilities: Vec<f64>) -> Result<Self> {
        if maps.is_empty() || maps.len() != probabilities.len() {
            return Err(Error::InvalidSystem("need one probability per map".into()));
        }
        for (i, &(a, b)) in maps.iter().enumerate() {
            if !(a.abs() < 1.0) || !b.is_finite() {
                return Err(Error::InvalidSystem(format!("map {i} is not a contraction")));
            }
            let (lo, hi) = (b.min(a + b), b.max(a + b));
            if lo < -1e-12 || hi > 1.0 + 1e-12 {
                return Err(Error::RangeViolation { from: 0.0, to: if lo < 0.0 { lo } else { hi } });
            }
        }
        if probabilities.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidSystem("probabilities must be positive".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSystem(format!("probabilities sum to {total}")));
        }
        Ok(Self { maps, probabilities })
    }

    pub fn maps(&self) -> &[(f64, f64)] {
        &self.maps
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    #[inline]
    pub fn apply(&self, i: usize, z: f64) -> f64 {
        let (a, b) = self.maps[i];
        (a * z + b).clamp(0.0, 1.0)
    }

    pub fn contraction(&self) -> f64 {
        self.maps.iter().fold(0.0, |m, &(a, _)| m.max(a.abs()))
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.len() - 1
    }

    /// A point distributed like the Hutchinson measure up to
    /// `contraction^burn_in`.
    fn sample_point<R: Rng>(&self, burn_in: usize, rng: &mut R) -> f64 {
        let mut z: f64 = rng.gen();
        for _ in 0..burn_in {
            z = self.apply(self.pick(rng), z);
        }
        z
    }

    /// The lift `G(x, z) = φ_{x0}(z)` over the Bernoulli shift with the same
    /// probabilities.
    pub fn skew_product(&self, theta: f64) -> Result<FiberSystem> {
        let spec = crate::symbolic::SubshiftSpec::bernoulli(self.probabilities.clone(), theta)?;
        let kind = FiberKind::FirstSymbolAffine {
            a: self.maps.iter().map(|m| m.0).collect(),
            b: self.maps.iter().map(|m| m.1).collect(),
        };
        FiberSystem::new(Arc::new(spec), Arc::new(FiberSpace::unit()), kind, None, None)
    }

    /// Recovers the IFS of a first-symbol affine system over a Bernoulli
    /// shift on the unit interval.
    pub fn from_system(sys: &FiberSystem) -> Result<Self> {
        let spec = sys.spec();
        if !spec.is_bernoulli() {
            return Err(Error::SpecMismatch("the base measure is not Bernoulli".into()));
        }
        if **sys.space() != FiberSpace::unit() {
            return Err(Error::SpecMismatch("the fiber is not the unit interval".into()));
        }
        match sys.kind() {
            FiberKind::FirstSymbolAffine { a, b } => {
                Self::new(a.iter().copied().zip(b.iter().copied()).collect(), spec.stationary().to_vec())
            }
            _ => Err(Error::SpecMismatch("fiber maps depend on more than the first symbol".into())),
        }
    }
}

/// Empirical measure of one chaos-game chain after `burn_in` discarded
/// steps, compressed to resolution `delta` (0 keeps every point).
pub fn chaos_game(ifs: &IfsSpec, samples: usize, burn_in: usize, seed: u64, delta: f64) -> Result<FiniteSignedMeasure> {
    if samples < MIN_CHAOS_SAMPLES {
        return Err(Error::InvalidInput(format!("chaos game needs at least {MIN_CHAOS_SAMPLES} samples")));
    }
    if burn_in < MIN_BURN_IN {
        return Err(Error::InvalidInput(format!("burn-in must be at least {MIN_BURN_IN}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = ifs.sample_point(burn_in, &mut rng);
    let mut points = Vec::with_capacity(samples);
    for _ in 0..samples {
        z = ifs.apply(ifs.pick(&mut rng), z);
        points.push(z);
    }
    points.sort_by(f64::total_cmp);
    let mut atoms: Vec<Atom> = Vec::new();
    let mut run = 0usize;
    for (i, &p) in points.iter().enumerate() {
        run += 1;
        if points.get(i + 1) != Some(&p) {
            atoms.push(Atom::new(p, run as f64 / samples as f64));
            run = 0;
        }
    }
    let space = FiberSpace::unit();
    compress_atoms(&space, &mut atoms, delta);
    normalize_atoms(&mut atoms);
    // Counts over `samples` need not sum to one in floating point; the last
    // atom absorbs the rounding.
    if let Some((last, rest)) = atoms.split_last_mut() {
        last.weight = 1.0 - rest.iter().map(|a| a.weight).sum::<f64>();
    }
    FiniteSignedMeasure::new(Arc::new(space), atoms)
}

/// `‖μ − Σ p_i φ_i* μ‖_W`.
pub fn hutchinson_residual(ifs: &IfsSpec, mu: &FiniteSignedMeasure) -> Result<f64> {
    if !mu.is_probability() {
        return Err(Error::InvalidInput("the residual needs a probability measure".into()));
    }
    let mut image = FiniteSignedMeasure::zero(mu.space().clone());
    for (i, &p) in ifs.probabilities().iter().enumerate() {
        let pushed = mu.pushforward(|z| ifs.apply(i, z))?;
        image = image.combine(1.0, &pushed, p);
    }
    Ok(mu.sub(&image).wk_norm())
}

/// `max_w ‖μ0|_w / φ1(w) − μ‖_W` for the lift of `ifs`.
pub fn product_structure_check(
    sys: &FiberSystem,
    ifs: &IfsSpec,
    mu0: &LeafwiseMeasure,
    hutchinson: &FiniteSignedMeasure,
) -> Result<f64> {
    let own = IfsSpec::from_system(sys)?;
    let same = own.len() == ifs.len()
        && own.maps.iter().zip(&ifs.maps).all(|(x, y)| (x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12)
        && own.probabilities.iter().zip(&ifs.probabilities).all(|(x, y)| (x - y).abs() < 1e-12);
    if !same {
        return Err(Error::SpecMismatch("the system is not the lift of this IFS".into()));
    }
    if mu0.spec() != sys.spec() {
        return Err(Error::SpecMismatch("the measure lives over a different base".into()));
    }
    let space = mu0.space().clone();
    let target = hutchinson.atoms();
    let worst = (0..mu0.len())
        .into_par_iter()
        .map(|i| {
            let entry = mu0.entry(i);
            let mass: f64 = entry.iter().map(|a| a.weight).sum();
            if mass <= 0.0 {
                return f64::INFINITY;
            }
            let mut diff: Vec<Atom> = entry.iter().map(|a| Atom::new(a.pos, a.weight / mass)).collect();
            diff.extend(target.iter().map(|a| Atom::new(a.pos, -a.weight)));
            normalize_atoms(&mut diff);
            wk_norm(&space, &diff)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealedRow {
    pub n: usize,
    pub monte_carlo: f64,
    pub stderr: f64,
    pub transfer: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealedReport {
    pub rows: Vec<AnnealedRow>,
    /// Rate fitted to the magnitudes of the transfer-side values.
    pub fitted_rate: Option<f64>,
    pub xi: f64,
    pub bound_passed: bool,
    pub agreement_passed: bool,
}

/// Settings of the transfer-engine side of [`annealed_correlation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealedOptions {
    pub theta: f64,
    /// Steps used to build the invariant measure.
    pub invariant_steps: usize,
    pub delta: f64,
    /// Added to `3·stderr` when comparing the two sides.
    pub slack: f64,
    pub burn_in: usize,
}

impl Default for AnnealedOptions {
    fn default() -> Self {
        Self { theta: 0.5, invariant_steps: 12, delta: 0.0, slack: 1e-4, burn_in: MIN_BURN_IN }
    }
}

/// `∫ C_n(g1, g2)(γ) dm(γ)` for `n ≤ n_max`, estimated twice: by sampling
/// `z ~ μ` and symbol words `γ ~ m` directly, and through the skew-product
/// identity with the transfer engine. Averaged over `γ` the coefficient is
/// the covariance of `g1(z)` and `g2(θ_n z)` under the joint law, where
/// `θ_n` composes the first `n` maps chosen by `γ`.
#[allow(clippy::too_many_arguments)]
pub fn annealed_correlation(
    ifs: &IfsSpec,
    g1: &Observable,
    g2: &Observable,
    n_max: usize,
    samples: usize,
    seed: u64,
    xi: f64,
    opts: AnnealedOptions,
) -> Result<AnnealedReport> {
    if !g1.is_fiber_only() || !g2.is_fiber_only() {
        return Err(Error::InvalidInput("annealed observables must be functions on the fiber".into()));
    }
    if samples < MIN_CHAOS_SAMPLES {
        return Err(Error::InvalidInput(format!("need at least {MIN_CHAOS_SAMPLES} samples")));
    }
    let per_batch = samples.div_ceil(MC_BATCHES);
    let batches: Vec<Vec<f64>> = (0..MC_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut s1 = 0.0;
            let mut s2 = vec![0.0; n_max + 1];
            let mut s12 = vec![0.0; n_max + 1];
            for _ in 0..per_batch {
                let mut z = ifs.sample_point(opts.burn_in, &mut rng);
                let v1 = g1.eval(&[0], z);
                s1 += v1;
                for n in 0..=n_max {
                    if n > 0 {
                        z = ifs.apply(ifs.pick(&mut rng), z);
                    }
                    let v2 = g2.eval(&[0], z);
                    s2[n] += v2;
                    s12[n] += v1 * v2;
                }
            }
            let m = per_batch as f64;
            (0..=n_max).map(|n| s12[n] / m - (s1 / m) * (s2[n] / m)).collect()
        })
        .collect();
    let k = MC_BATCHES as f64;
    let mc: Vec<(f64, f64)> = (0..=n_max)
        .map(|n| {
            let mean = batches.iter().map(|b| b[n]).sum::<f64>() / k;
            let var = batches.iter().map(|b| (b[n] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (mean, (var / k).sqrt())
        })
        .collect();

    let sys = ifs.skew_product(opts.theta)?;
    let start = FiniteSignedMeasure::dirac(sys.space().clone(), 0.0)?;
    let mu0 = crate::transfer::invariant_measure(&sys, n_max + 1, opts.invariant_steps, opts.delta, &start)?.measure;
    let transfer = correlation_sequence(&sys, &mu0, g1, g2, n_max, opts.delta, xi)?;

    let rows: Vec<AnnealedRow> = mc
        .iter()
        .zip(&transfer.signed_values)
        .enumerate()
        .map(|(n, (&(monte_carlo, stderr), &t))| AnnealedRow {
            n,
            monte_carlo,
            stderr,
            transfer: t,
            agrees: (monte_carlo - t).abs() <= 3.0 * stderr + opts.slack,
        })
        .collect();
    let magnitudes: Vec<f64> = rows.iter().map(|r| r.transfer.abs()).collect();
    let fitted_rate = if magnitudes.iter().all(|&v| v <= crate::rates::FIT_FLOOR) {
        None
    } else {
        fit_tail_rate(&magnitudes).map(|f| f.rate)
    };
    Ok(AnnealedReport {
        agreement_passed: rows.iter().all(|r| r.agrees),
        bound_passed: fitted_rate.is_none_or(|r| r <= xi + 0.05),
        rows,
        fitted_rate,
        xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::transfer::invariant_measure;

    fn dyadic_ifs() -> IfsSpec {
        IfsSpec::new(vec![(0.5, 0.0), (0.5, 0.5)], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(IfsSpec::new(vec![(1.0, 0.0)], vec![1.0]).is_err());
        assert!(IfsSpec::new(vec![(0.5, 0.6)], vec![1.0]).is_err());
        assert!(IfsSpec::new(vec![(0.5, 0.0), (0.5, 0.5)], vec![0.5, 0.4]).is_err());
        assert!(IfsSpec::new(vec![(-0.5, 0.5)], vec![1.0]).is_ok());
    }

    #[test]
    fn chaos_game_examples() {
        let lebesgue = FiniteSignedMeasure::uniform_grid(Arc::new(FiberSpace::unit()), 4096).unwrap();
        let mu = chaos_game(&dyadic_ifs(), 100_000, 100, 3, 0.0).unwrap();
        assert_eq!(mu.total_mass(), 1.0);
        assert!(mu.sub(&lebesgue).wk_norm() <= 0.02);
        assert!(hutchinson_residual(&dyadic_ifs(), &mu).unwrap() <= 0.03);

        let single = IfsSpec::new(vec![(0.5, 0.0)], vec![1.0]).unwrap();
        let mu = chaos_game(&single, 1000, 1100, 1, 0.0).unwrap();
        assert_eq!(mu.atoms(), [Atom::new(0.0, 1.0)]);

        let cantor = IfsSpec::new(vec![(1.0 / 3.0, 0.0), (1.0 / 3.0, 2.0 / 3.0)], vec![0.5, 0.5]).unwrap();
        let delta = 2f64.powi(-12);
        let mu = chaos_game(&cantor, 10_000, 100, 5, delta).unwrap();
        assert!(mu.atoms().iter().all(|a| a.pos <= 1.0 / 3.0 + delta || a.pos >= 2.0 / 3.0 - delta));
        assert!(chaos_game(&cantor, 10, 100, 5, 0.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let single = IfsSpec::new(vec![(0.5, 0.0)], vec![1.0]).unwrap();
        let space = Arc::new(FiberSpace::unit());
        let d0 = FiniteSignedMeasure::dirac(space.clone(), 0.0).unwrap();
        assert_eq!(hutchinson_residual(&single, &d0).unwrap(), 0.0);
        let d1 = FiniteSignedMeasure::dirac(space.clone(), 1.0).unwrap();
        assert!((hutchinson_residual(&single, &d1).unwrap() - 0.5).abs() < 1e-15);
        let grid = FiniteSignedMeasure::uniform_grid(space, 1024).unwrap();
        assert!(hutchinson_residual(&dyadic_ifs(), &grid).unwrap() <= 1.0 / 1024.0);
    }

    #[test]
    fn lift_round_trip() {
        let ifs = dyadic_ifs();
        let sys = ifs.skew_product(0.5).unwrap();
        assert_eq!(IfsSpec::from_system(&sys).unwrap(), ifs);
        assert!(matches!(IfsSpec::from_system(&catalog::golden_cantor()), Err(Error::SpecMismatch(_))));
        assert!(matches!(IfsSpec::from_system(&catalog::sequence_affine()), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn product_structure_on_skewed_ifs() {
        let ifs = IfsSpec::new(vec![(0.5, 0.0), (0.5, 0.5)], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let sys = ifs.skew_product(0.5).unwrap();
        let hutch = chaos_game(&ifs, 100_000, 100, 11, 2f64.powi(-12)).unwrap();
        let d0 = FiniteSignedMeasure::dirac(sys.space().clone(), 0.0).unwrap();
        for depth in [1, 4] {
            let mu0 = invariant_measure(&sys, depth, 12, 0.0, &d0).unwrap().measure;
            assert!(product_structure_check(&sys, &ifs, &mu0, &hutch).unwrap() <= 0.03);
        }
        let mu0 = invariant_measure(&sys, 2, 4, 0.0, &d0).unwrap().measure;
        assert!(product_structure_check(&sys, &dyadic_ifs(), &mu0, &hutch).is_err());
    }

    #[test]
    fn annealed_dyadic() {
        let opts = AnnealedOptions { invariant_steps: 10, ..Default::default() };
        let r = annealed_correlation(&dyadic_ifs(), &Observable::z(), &Observable::z(), 6, 40_000, 7, 0.84, opts).unwrap();
        assert!(r.agreement_passed, "{:?}", r.rows);
        assert!((r.rows[0].transfer - 1.0 / 12.0).abs() < 1e-6);
        assert!((r.fitted_rate.unwrap() - 0.5).abs() < 1e-6);
        let flat = annealed_correlation(&dyadic_ifs(), &Observable::Constant(1.0), &Observable::z(), 3, 2000, 7, 0.84, opts).unwrap();
        assert!(flat.rows.iter().all(|r| r.transfer.abs() < 1e-14 && r.monte_carlo.abs() < 1e-14));
        assert!(annealed_correlation(&dyadic_ifs(), &Observable::parse("x0").unwrap(), &Observable::z(), 3, 2000, 7, 0.84, opts).is_err());
    }
}
