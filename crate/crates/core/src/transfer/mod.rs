//! Disintegrated measures on `Σ⁺_A × K` and the leafwise transfer operator.
//!
//! A [`LeafwiseMeasure`] stores one atomic fiber measure per admissible
//! depth-`k` word. The entry over `w` is the restriction `μ|_w`, so its total
//! mass is the marginal density on `[w]`. One transfer step reads the
//! entries over the preimage words `i·v` and writes depth `k − 1`.

mod diagnostics;
mod io;
mod norms;

pub use diagnostics::{
    bound_constants, equilibrium_rate, lasota_yorke_check, BoundConstants, EquilibriumReport,
    LasotaYorkeReport, LasotaYorkeRow,
};
pub use norms::{
    lipschitz_constant, strong_norm, weak_distance, weak_norm, NormReport, LEAFWISE_EXACT_LIMIT,
    LEAFWISE_PAIR_BUDGET,
};

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiber::FiberSystem;
use crate::measure::{compress_atoms, normalize_atoms, Atom, FiberSpace, FiniteSignedMeasure};
use crate::symbolic::{CylinderFunction, SubshiftSpec, WordTable};

/// Default memory cap for a single run, overridable with `FIBERLAB_MEM_CAP`.
pub const DEFAULT_MEM_CAP: u64 = 2 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct LeafwiseMeasure {
    spec: Arc<SubshiftSpec>,
    space: Arc<FiberSpace>,
    depth: usize,
    offsets: Vec<usize>,
    atoms: Vec<Atom>,
}

impl LeafwiseMeasure {
    /// Builds from one atom list per word, in word order. Lists are
    /// normalized.
    pub fn from_entries(
        spec: Arc<SubshiftSpec>,
        space: Arc<FiberSpace>,
        depth: usize,
        entries: Vec<Vec<Atom>>,
    ) -> Result<Self> {
        let count = WordTable::count(&spec, depth)?;
        if entries.len() != count {
            return Err(Error::InvalidInput(format!(
                "expected {count} entries at depth {depth}, got {}",
                entries.len()
            )));
        }
        for a in entries.iter().flatten() {
            if !space.contains(a.pos) || !a.weight.is_finite() {
                return Err(Error::InvalidInput(format!("atom ({}, {}) is invalid", a.pos, a.weight)));
            }
        }
        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        let mut atoms = Vec::with_capacity(entries.iter().map(Vec::len).sum());
        for mut e in entries {
            normalize_atoms(&mut e);
            atoms.extend(e);
            offsets.push(atoms.len());
        }
        Ok(Self { spec, space, depth, offsets, atoms })
    }

    /// `m × ν` at the given depth: every entry is `ν`.
    pub fn product(spec: Arc<SubshiftSpec>, nu: &FiniteSignedMeasure, depth: usize) -> Result<Self> {
        if !nu.is_probability() {
            return Err(Error::InvalidInput("product needs a probability fiber measure".into()));
        }
        Self::constant_family(spec, nu, depth)
    }

    /// Every entry equal to `ν`, with no probability requirement.
    pub fn constant_family(spec: Arc<SubshiftSpec>, nu: &FiniteSignedMeasure, depth: usize) -> Result<Self> {
        let count = WordTable::count(&spec, depth)?;
        let per = nu.atoms();
        let mut atoms = Vec::with_capacity(count * per.len());
        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        for _ in 0..count {
            atoms.extend_from_slice(per);
            offsets.push(atoms.len());
        }
        Ok(Self { spec, space: nu.space().clone(), depth, offsets, atoms })
    }

    pub fn zero(spec: Arc<SubshiftSpec>, space: Arc<FiberSpace>, depth: usize) -> Result<Self> {
        let count = WordTable::count(&spec, depth)?;
        Ok(Self { spec, space, depth, offsets: vec![0; count + 1], atoms: Vec::new() })
    }

    pub fn spec(&self) -> &Arc<SubshiftSpec> {
        &self.spec
    }

    pub fn space(&self) -> &Arc<FiberSpace> {
        &self.space
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of words (entries).
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_atoms(&self) -> usize {
        self.atoms.len()
    }

    #[inline]
    pub fn entry(&self, i: usize) -> &[Atom] {
        &self.atoms[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn entry_measure(&self, i: usize) -> FiniteSignedMeasure {
        FiniteSignedMeasure::new(self.space.clone(), self.entry(i).to_vec())
            .expect("entries are valid by construction")
    }

    pub fn word_table(&self) -> WordTable {
        WordTable::new(&self.spec, self.depth).expect("depth validated at construction")
    }

    /// Entry masses: the marginal density as a cylinder function.
    pub fn density(&self) -> CylinderFunction {
        CylinderFunction {
            depth: self.depth,
            values: (0..self.len()).map(|i| self.entry(i).iter().map(|a| a.weight).sum()).collect(),
        }
    }

    /// `μ(Σ × K) = Σ_w m([w]) φ1(w)`.
    pub fn global_mass(&self) -> f64 {
        let table = self.word_table();
        let mut word = Vec::with_capacity(self.depth);
        let density = self.density();
        let mut total = 0.0;
        for (i, v) in density.values.iter().enumerate() {
            table.unrank_into(i, &mut word);
            total += self.spec.mass_of(&word) * v;
        }
        total
    }

    pub fn is_positive(&self) -> bool {
        self.atoms.iter().all(|a| a.weight >= 0.0)
    }

    /// Largest per-entry total variation.
    pub fn max_variation(&self) -> f64 {
        (0..self.len())
            .map(|i| self.entry(i).iter().map(|a| a.weight.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Refines to depth `k + extra` by copying each entry to every word that
    /// extends it. Exact for families constant on the coarser cylinders.
    pub fn lift(&self, extra: usize) -> Result<Self> {
        let fine = WordTable::new(&self.spec, self.depth + extra)?;
        let coarse = self.word_table();
        let entries = (0..fine.len())
            .into_par_iter()
            .map(|i| {
                let w = fine.unrank(i);
                let parent = coarse.rank(&w[..self.depth]).expect("prefix is admissible");
                self.entry(parent).to_vec()
            })
            .collect();
        Self::from_entries(self.spec.clone(), self.space.clone(), self.depth + extra, entries)
    }

    /// A random signed family: each entry gets between one and `max_atoms`
    /// atoms at random positions with weights scaled to total variation at
    /// most one.
    pub fn random_signed<R: Rng>(
        spec: Arc<SubshiftSpec>,
        space: Arc<FiberSpace>,
        depth: usize,
        max_atoms: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let count = WordTable::count(&spec, depth)?;
        let max_atoms = max_atoms.max(1);
        let entries = (0..count)
            .map(|_| {
                let k = rng.gen_range(1..=max_atoms);
                let mut e: Vec<Atom> =
                    (0..k).map(|_| Atom::new(space.random_point(rng), rng.gen_range(-1.0..=1.0))).collect();
                let tv: f64 = e.iter().map(|a| a.weight.abs()).sum();
                let scale = rng.gen_range(0.0..=1.0) / tv.max(1e-300);
                e.iter_mut().for_each(|a| a.weight *= scale);
                e
            })
            .collect();
        Self::from_entries(spec, space, depth, entries)
    }

    /// `self − (global mass)·reference`, which has zero average when the
    /// reference is a probability.
    pub fn centered(&self, reference: &Self) -> Result<Self> {
        self.combine(1.0, reference, -self.global_mass() / reference.global_mass())
    }

    /// Entrywise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let entries = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let mut e: Vec<Atom> = self.entry(i).iter().map(|x| Atom::new(x.pos, a * x.weight)).collect();
                e.extend(other.entry(i).iter().map(|x| Atom::new(x.pos, b * x.weight)));
                e
            })
            .collect();
        Self::from_entries(self.spec.clone(), self.space.clone(), self.depth, entries)
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            let offsets = vec![0; self.offsets.len()];
            return Self { offsets, atoms: Vec::new(), ..self.clone() };
        }
        let mut out = self.clone();
        out.atoms.iter_mut().for_each(|a| a.weight *= c);
        out
    }

    /// Applies `f(word, atoms) -> atoms` to every entry.
    pub fn map_entries<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&[usize], &[Atom]) -> Vec<Atom> + Sync,
    {
        let table = self.word_table();
        let entries = (0..self.len())
            .into_par_iter()
            .map(|i| f(&table.unrank(i), self.entry(i)))
            .collect();
        Self::from_entries(self.spec.clone(), self.space.clone(), self.depth, entries)
    }

    /// `Σ_w m([w]) ∫ h(w, y) d(μ|_w)(y)`.
    pub fn integrate<F>(&self, h: F) -> f64
    where
        F: Fn(&[usize], f64) -> f64 + Sync,
    {
        let table = self.word_table();
        let parts: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                let w = table.unrank(i);
                let inner: f64 = self.entry(i).iter().map(|a| a.weight * h(&w, a.pos)).sum();
                self.spec.mass_of(&w) * inner
            })
            .collect();
        parts.iter().sum()
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.depth != other.depth || self.spec != other.spec || self.space != other.space {
            return Err(Error::InvalidInput("leafwise measures are not compatible".into()));
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        spec: Arc<SubshiftSpec>,
        space: Arc<FiberSpace>,
        depth: usize,
        offsets: Vec<usize>,
        atoms: Vec<Atom>,
    ) -> Self {
        Self { spec, space, depth, offsets, atoms }
    }
}

/// One application of the leafwise transfer operator:
///
/// ```text
/// (F*μ)|_v = Σ_{i : A_{i v0} = 1} g_i(v) · (G_{i·v})_* μ|_{i·v}
/// ```
///
/// followed by snapping to the `δ`-grid when `δ > 0`. Output entries are
/// computed in parallel, each with a fixed branch order, so the result does
/// not depend on the thread count.
pub fn transfer_step(sys: &FiberSystem, mu: &LeafwiseMeasure, delta: f64) -> Result<LeafwiseMeasure> {
    if mu.depth < 2 {
        return Err(Error::CannotCoarsen);
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidResolution(delta));
    }
    if mu.spec.as_ref() != sys.spec().as_ref() || mu.space.as_ref() != sys.space().as_ref() {
        return Err(Error::InvalidInput("measure does not belong to this system".into()));
    }
    let spec = sys.spec();
    let space = sys.space();
    let n = spec.alphabet();
    let k = mu.depth;
    let out_table = WordTable::new(spec, k - 1)?;
    let in_table = mu.word_table();
    let entries: Vec<Vec<Atom>> = (0..out_table.len())
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(k),
            |pre, j| {
                pre.clear();
                pre.push(0);
                let mut tail = Vec::with_capacity(k - 1);
                out_table.unrank_into(j, &mut tail);
                pre.extend_from_slice(&tail);
                let v0 = pre[1];
                let mut out = Vec::new();
                for i in 0..n {
                    if !spec.allowed(i, v0) {
                        continue;
                    }
                    pre[0] = i;
                    let idx = in_table.rank(pre).expect("preimage word is admissible");
                    let g = spec.branch_weight(i, v0);
                    let map = sys.fiber_map(pre);
                    out.extend(mu.entry(idx).iter().map(|a| Atom::new(map.apply(a.pos), g * a.weight)));
                }
                if let FiberSpace::Interval { lo, hi } = **space {
                    out.iter_mut().for_each(|a| a.pos = a.pos.clamp(lo, hi));
                }
                normalize_atoms(&mut out);
                compress_atoms(space, &mut out, delta);
                out
            },
        )
        .collect();
    let mut offsets = Vec::with_capacity(entries.len() + 1);
    offsets.push(0);
    let mut atoms = Vec::with_capacity(entries.iter().map(Vec::len).sum());
    for e in entries {
        atoms.extend(e);
        offsets.push(atoms.len());
    }
    Ok(LeafwiseMeasure::from_parts(spec.clone(), space.clone(), k - 1, offsets, atoms))
}

/// `n` transfer steps.
pub fn iterate(sys: &FiberSystem, mu: &LeafwiseMeasure, steps: usize, delta: f64) -> Result<LeafwiseMeasure> {
    let mut cur = mu.clone();
    for _ in 0..steps {
        cur = transfer_step(sys, &cur, delta)?;
    }
    Ok(cur)
}

#[derive(Debug, Clone)]
pub struct InvariantRun {
    pub measure: LeafwiseMeasure,
    /// `‖F*μ − μ‖∞` after re-lifting the result by one symbol.
    pub residual: f64,
    /// `2α^n + (n + 1)δ`, the expected size of the residual.
    pub residual_bound: f64,
    pub start_depth: usize,
    pub steps: usize,
}

/// Memory cap in bytes: `FIBERLAB_MEM_CAP` if set and valid, else
/// [`DEFAULT_MEM_CAP`].
pub fn memory_cap() -> u64 {
    std::env::var("FIBERLAB_MEM_CAP")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MEM_CAP)
}

/// Rough peak footprint of iterating from `m × ν` at `start_depth`: input,
/// output and staging copies of every atom plus offsets.
pub fn memory_estimate(spec: &SubshiftSpec, start_depth: usize, atoms_per_entry: usize) -> Result<u64> {
    let words = WordTable::count(spec, start_depth)? as u64;
    let per_entry = (atoms_per_entry.max(1) * std::mem::size_of::<Atom>() + 3 * std::mem::size_of::<usize>()) as u64;
    Ok(words.saturating_mul(per_entry).saturating_mul(3))
}

/// Approximates the invariant probability at depth `k` by iterating `n`
/// steps from `m × ν0` at depth `k + n`. When the fiber maps read only the
/// first symbol, every iterate of a product family depends on the first
/// symbol alone, so the run happens at depth 1 and is copied outward.
pub fn invariant_measure(
    sys: &FiberSystem,
    final_depth: usize,
    steps: usize,
    delta: f64,
    nu0: &FiniteSignedMeasure,
) -> Result<InvariantRun> {
    if final_depth == 0 {
        return Err(Error::InvalidDepth(0));
    }
    let shallow = sys.is_first_symbol() && final_depth > 1;
    let build_depth = if shallow { 1 } else { final_depth };
    let start_depth = build_depth + steps;
    let estimate = memory_estimate(sys.spec(), start_depth, nu0.len())?;
    let cap = memory_cap();
    if estimate > cap {
        return Err(Error::MemoryBound { estimate, cap });
    }
    if nu0.space().as_ref() != sys.space().as_ref() {
        return Err(Error::InvalidInput("initial fiber measure lives on another space".into()));
    }
    let start = LeafwiseMeasure::product(sys.spec().clone(), nu0, start_depth)?;
    let mut measure = iterate(sys, &start, steps, delta)?;
    if shallow {
        let widest = (0..measure.len()).map(|i| measure.entry(i).len()).max().unwrap_or(0);
        let estimate = memory_estimate(sys.spec(), final_depth, widest)?;
        if estimate > cap {
            return Err(Error::MemoryBound { estimate, cap });
        }
        measure = measure.lift(final_depth - 1)?;
    }
    let next = transfer_step(sys, &measure.lift(1)?, delta)?;
    let residual = weak_distance(&next, &measure)?;
    let residual_bound = 2.0 * sys.alpha().powi(steps as i32) + (steps + 1) as f64 * delta;
    Ok(InvariantRun { measure, residual, residual_bound, start_depth, steps })
}
