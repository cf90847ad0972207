use rayon::prelude::*;
use serde::Serialize;

use super::LeafwiseMeasure;
use crate::error::{Error, Result};
use crate::measure::{normalize_atoms, wk_norm, Atom};
use crate::symbolic::{max_over_pairs, theta_norm, PairSampling};

/// Word counts at or below this get exact pair enumeration in
/// [`lipschitz_constant`].
pub const LEAFWISE_EXACT_LIMIT: usize = 256;
/// Sampled pair budget of [`lipschitz_constant`] above that size.
pub const LEAFWISE_PAIR_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    /// `sup_w ‖μ|_w‖_W`.
    pub weak: f64,
    /// `‖φ1‖_θ` of the marginal density.
    pub marginal_theta: f64,
    /// `weak + marginal_theta`.
    pub strong: f64,
    /// Lipschitz constant of the disintegration.
    pub lip_disint: f64,
    /// `θ^k / (1 − θ)`, the unresolved distance inside one cylinder.
    pub truncation_note: f64,
}

/// `‖μ‖∞`, the largest flat norm among the entries.
pub fn weak_norm(mu: &LeafwiseMeasure) -> f64 {
    let space = mu.space().clone();
    (0..mu.len())
        .into_par_iter()
        .map(|i| wk_norm(&space, mu.entry(i)))
        .reduce(|| 0.0, f64::max)
}

/// `‖μ − ν‖∞` without materializing the difference.
pub fn weak_distance(mu: &LeafwiseMeasure, nu: &LeafwiseMeasure) -> Result<f64> {
    mu.check_compatible(nu)?;
    let space = mu.space().clone();
    Ok((0..mu.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            entry_difference(buf, mu.entry(i), nu.entry(i));
            wk_norm(&space, buf)
        })
        .reduce(|| 0.0, f64::max))
}

fn entry_difference(buf: &mut Vec<Atom>, a: &[Atom], b: &[Atom]) {
    buf.clear();
    buf.extend_from_slice(a);
    buf.extend(b.iter().map(|x| Atom::new(x.pos, -x.weight)));
    normalize_atoms(buf);
}

/// `sup_{v ≠ w} ‖μ|_v − μ|_w‖_W / d_θ(v, w)` over the pairs selected by
/// `sampling`. Pass `PairSampling::Auto { limit: LEAFWISE_EXACT_LIMIT }` for
/// the default policy; above the limit the sampled budget is
/// [`LEAFWISE_PAIR_BUDGET`].
pub fn lipschitz_constant(mu: &LeafwiseMeasure, sampling: PairSampling) -> Result<f64> {
    if mu.len() < 2 {
        return Err(Error::InvalidInput("need at least two cylinders to compare".into()));
    }
    let sampling = match sampling {
        PairSampling::Auto { limit } if mu.len() > limit => PairSampling::Sampled {
            pairs: LEAFWISE_PAIR_BUDGET,
            seed: 0,
        },
        other => other,
    };
    let table = mu.word_table();
    let space = mu.space().clone();
    Ok(max_over_pairs(mu.spec(), &table, sampling, |i, j, d| {
        let mut buf = Vec::with_capacity(mu.entry(i).len() + mu.entry(j).len());
        entry_difference(&mut buf, mu.entry(i), mu.entry(j));
        wk_norm(&space, &buf) / d
    }))
}

/// Assembles weak, marginal and strong norms plus the disintegration
/// Lipschitz constant. Depth-1 measures report a zero Lipschitz constant
/// only when there is a single word.
pub fn strong_norm(mu: &LeafwiseMeasure) -> NormReport {
    let weak = weak_norm(mu);
    let density = mu.density();
    let marginal_theta = theta_norm(mu.spec(), &density, PairSampling::default()).norm;
    let lip_disint = lipschitz_constant(mu, PairSampling::Auto { limit: LEAFWISE_EXACT_LIMIT }).unwrap_or(0.0);
    let theta = mu.spec().theta();
    NormReport {
        weak,
        marginal_theta,
        strong: weak + marginal_theta,
        lip_disint,
        truncation_note: theta.powi(mu.depth() as i32) / (1.0 - theta),
    }
}
