//! Finite-support signed measures on the fiber space.

mod flat_norm;

pub use flat_norm::{wk_distance, wk_norm, wk_norm_lp, wk_oracle, MAX_ORACLE_ATOMS};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions closer than this are merged into one atom.
pub const MERGE_TOL: f64 = 1e-12;
/// Atoms lighter than this are dropped during normalization.
pub const ZERO_WEIGHT: f64 = 1e-15;
/// Slack allowed when checking that a map stays inside the fiber space.
pub const RANGE_TOL: f64 = 1e-12;

const DIAMETER_TOL: f64 = 1e-12;

/// The compact fiber `K`, either an interval with the usual distance or a
/// finite metric space given by its distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberSpace {
    Interval { lo: f64, hi: f64 },
    Finite { dist: Vec<Vec<f64>> },
}

impl FiberSpace {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidSpace(format!("[{lo}, {hi}] is not an interval")));
        }
        if hi - lo > 1.0 + DIAMETER_TOL {
            return Err(Error::InvalidSpace(format!("diameter {} exceeds 1", hi - lo)));
        }
        Ok(FiberSpace::Interval { lo, hi })
    }

    pub fn unit() -> Self {
        FiberSpace::Interval { lo: 0.0, hi: 1.0 }
    }

    pub fn finite(dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = dist.len();
        if n == 0 || dist.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpace("distance matrix must be square and nonempty".into()));
        }
        for i in 0..n {
            if dist[i][i] != 0.0 {
                return Err(Error::InvalidSpace(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let d = dist[i][j];
                if !(d.is_finite() && d >= 0.0) || (d - dist[j][i]).abs() > 1e-15 {
                    return Err(Error::InvalidSpace(format!("bad distance at ({i},{j})")));
                }
                if i != j && d == 0.0 {
                    return Err(Error::InvalidSpace(format!("points {i} and {j} coincide")));
                }
                if d > 1.0 + DIAMETER_TOL {
                    return Err(Error::InvalidSpace(format!("diameter {d} exceeds 1")));
                }
                for (k, via) in dist.iter().enumerate() {
                    if d > dist[i][k] + via[j] + 1e-12 {
                        return Err(Error::InvalidSpace(format!(
                            "triangle inequality fails for ({i},{k},{j})"
                        )));
                    }
                }
            }
        }
        Ok(FiberSpace::Finite { dist })
    }

    pub fn diameter(&self) -> f64 {
        match self {
            FiberSpace::Interval { lo, hi } => hi - lo,
            FiberSpace::Finite { dist } => dist.iter().flatten().fold(0.0, |m, &d| m.max(d)),
        }
    }

    /// Distance between two positions. Finite-space positions are point
    /// indices stored as floats.
    #[inline]
    pub fn dist(&self, x: f64, y: f64) -> f64 {
        match self {
            FiberSpace::Interval { .. } => (x - y).abs(),
            FiberSpace::Finite { dist } => dist[x as usize][y as usize],
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            FiberSpace::Interval { lo, hi } => x >= *lo - RANGE_TOL && x <= *hi + RANGE_TOL,
            FiberSpace::Finite { dist } => x >= 0.0 && x.fract() == 0.0 && (x as usize) < dist.len(),
        }
    }

    pub fn is_interval(&self) -> bool {
        matches!(self, FiberSpace::Interval { .. })
    }

    /// `s` evenly spread sample points, endpoints included for intervals,
    /// every point for finite spaces.
    pub fn sample_points(&self, s: usize) -> Vec<f64> {
        match self {
            FiberSpace::Interval { lo, hi } => {
                let s = s.max(2);
                (0..s).map(|i| lo + (hi - lo) * i as f64 / (s - 1) as f64).collect()
            }
            FiberSpace::Finite { dist } => (0..dist.len()).map(|i| i as f64).collect(),
        }
    }

    /// A uniformly random point of the space.
    pub fn random_point<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match self {
            FiberSpace::Interval { lo, hi } => rng.gen_range(*lo..=*hi),
            FiberSpace::Finite { dist } => rng.gen_range(0..dist.len()) as f64,
        }
    }

    /// Snaps a mapped position back into the space if it overshoots by
    /// rounding noise; anything further out is a range violation.
    fn admit(&self, from: f64, to: f64) -> Result<f64> {
        if !to.is_finite() || !self.contains(to) {
            return Err(Error::RangeViolation { from, to });
        }
        Ok(match self {
            FiberSpace::Interval { lo, hi } => to.clamp(*lo, *hi),
            FiberSpace::Finite { .. } => to,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pos: f64,
    pub weight: f64,
}

impl Atom {
    pub fn new(pos: f64, weight: f64) -> Self {
        Self { pos, weight }
    }
}

/// Sorts by position, merges near-coincident positions and drops negligible
/// weights. Every measure in the crate is kept in this form.
pub fn normalize_atoms(atoms: &mut Vec<Atom>) {
    if atoms.len() > 1 && !atoms.windows(2).all(|w| w[0].pos < w[1].pos) {
        atoms.sort_by(|a, b| a.pos.total_cmp(&b.pos));
    }
    let mut out = 0;
    for i in 0..atoms.len() {
        let a = atoms[i];
        if out > 0 && a.pos - atoms[out - 1].pos <= MERGE_TOL {
            atoms[out - 1].weight += a.weight;
        } else {
            atoms[out] = a;
            out += 1;
        }
    }
    atoms.truncate(out);
    atoms.retain(|a| a.weight.abs() >= ZERO_WEIGHT);
}

/// A finite-support signed measure on a [`FiberSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSignedMeasure {
    atoms: Vec<Atom>,
    space: Arc<FiberSpace>,
}

impl FiniteSignedMeasure {
    pub fn new(space: Arc<FiberSpace>, mut atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !space.contains(a.pos) || !a.weight.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "atom ({}, {}) is not a finite weight inside the space",
                    a.pos, a.weight
                )));
            }
        }
        normalize_atoms(&mut atoms);
        Ok(Self { atoms, space })
    }

    pub fn zero(space: Arc<FiberSpace>) -> Self {
        Self { atoms: Vec::new(), space }
    }

    pub fn dirac(space: Arc<FiberSpace>, pos: f64) -> Result<Self> {
        Self::new(space, vec![Atom::new(pos, 1.0)])
    }

    pub fn from_pairs(space: Arc<FiberSpace>, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(space, pairs.iter().map(|&(p, w)| Atom::new(p, w)).collect())
    }

    /// Uniform weights on an evenly spaced `cells`-point grid of an interval
    /// (cell midpoints), the discrete stand-in for Lebesgue measure.
    pub fn uniform_grid(space: Arc<FiberSpace>, cells: usize) -> Result<Self> {
        let FiberSpace::Interval { lo, hi } = *space else {
            return Err(Error::InvalidSpace("uniform grid needs an interval".into()));
        };
        let w = 1.0 / cells as f64;
        let atoms = (0..cells)
            .map(|i| Atom::new(lo + (hi - lo) * (i as f64 + 0.5) * w, w))
            .collect();
        Self::new(space, atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<Atom> {
        self.atoms
    }

    pub fn space(&self) -> &Arc<FiberSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `Σ |w_j|`, the total variation of an atomic measure.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    pub fn is_probability(&self) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0) && (self.total_mass() - 1.0).abs() <= 1e-12
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(a.pos)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut atoms: Vec<Atom> = self.atoms.iter().map(|a| Atom::new(a.pos, a.weight * c)).collect();
        atoms.retain(|a| a.weight.abs() >= ZERO_WEIGHT);
        Self { atoms, space: self.space.clone() }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mut atoms = Vec::with_capacity(self.len() + other.len());
        atoms.extend(self.atoms.iter().map(|x| Atom::new(x.pos, a * x.weight)));
        atoms.extend(other.atoms.iter().map(|x| Atom::new(x.pos, b * x.weight)));
        normalize_atoms(&mut atoms);
        Self { atoms, space: self.space.clone() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(1.0, other, -1.0)
    }

    /// Positive and negative parts. Atoms are disjoint, so the split is per
    /// atom.
    pub fn jordan(&self) -> (Self, Self) {
        let plus = self.atoms.iter().filter(|a| a.weight > 0.0).copied().collect();
        let minus = self
            .atoms
            .iter()
            .filter(|a| a.weight < 0.0)
            .map(|a| Atom::new(a.pos, -a.weight))
            .collect();
        (
            Self { atoms: plus, space: self.space.clone() },
            Self { atoms: minus, space: self.space.clone() },
        )
    }

    /// Moves every atom through `f`; weights are untouched.
    pub fn pushforward(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut atoms = Vec::with_capacity(self.len());
        for a in &self.atoms {
            atoms.push(Atom::new(self.space.admit(a.pos, f(a.pos))?, a.weight));
        }
        normalize_atoms(&mut atoms);
        Ok(Self { atoms, space: self.space.clone() })
    }

    /// Snaps atoms to the `δ`-grid anchored at the left end of the interval
    /// and merges. Finite spaces are returned unchanged.
    pub fn compress(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidResolution(delta));
        }
        let mut atoms = self.atoms.clone();
        compress_atoms(&self.space, &mut atoms, delta);
        Ok(Self { atoms, space: self.space.clone() })
    }

    /// Bounded-Lipschitz norm `sup { ∫ g dμ : |g| ≤ 1, Lip(g) ≤ 1 }`.
    pub fn wk_norm(&self) -> f64 {
        wk_norm(&self.space, &self.atoms)
    }

    /// Atoms as `[position, weight]` pairs.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.atoms.iter().map(|a| [a.pos, a.weight]).collect()
    }
}

/// Grid snapping shared by [`FiniteSignedMeasure::compress`] and the
/// transfer engine. A `delta` of zero leaves the atoms as they are.
pub fn compress_atoms(space: &FiberSpace, atoms: &mut Vec<Atom>, delta: f64) {
    if delta <= 0.0 {
        return;
    }
    if let FiberSpace::Interval { lo, hi } = *space {
        for a in atoms.iter_mut() {
            let cell = ((a.pos - lo) / delta).round_ties_even();
            a.pos = (lo + cell * delta).min(hi);
        }
        normalize_atoms(atoms);
    }
}
