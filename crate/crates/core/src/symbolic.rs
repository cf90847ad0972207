//! One-sided subshifts of finite type at cylinder resolution.
//!
//! Symbols are `0..N`. Every object in the crate that depends on a point of
//! the shift space is evaluated on depth-`k` cylinders, ordered
//! lexicographically among admissible words. [`WordTable`] ranks and unranks
//! those words without storing them, so depth-20 tables stay cheap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rates::fit_tail_rate;

/// Word counts at or below this use exact pair enumeration in the
/// Lipschitz estimators; above it a sampled budget is used.
pub const EXACT_PAIR_LIMIT: usize = 1024;
/// Pair budget of the sampled Lipschitz estimators.
pub const DEFAULT_PAIR_BUDGET: usize = 200_000;

const STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITER: usize = 100_000;

/// Transition structure, Markov data and metric parameter of `Σ⁺_A`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubshiftSpec {
    alphabet: usize,
    transition: Vec<u8>,
    stochastic: Vec<f64>,
    stationary: Vec<f64>,
    theta: f64,
}

impl SubshiftSpec {
    /// Builds and validates a spec. `stationary` is computed by power
    /// iteration when not supplied.
    pub fn new(
        transition: Vec<Vec<u8>>,
        stochastic: Vec<Vec<f64>>,
        stationary: Option<Vec<f64>>,
        theta: f64,
    ) -> Result<Self> {
        let n = transition.len();
        if n < 2 {
            return Err(Error::InvalidSpec("alphabet needs at least two symbols".into()));
        }
        if !check_aperiodic(&transition)? {
            return Err(Error::InvalidSpec("transition matrix is not aperiodic".into()));
        }
        if stochastic.len() != n || stochastic.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidSpec("stochastic matrix has the wrong shape".into()));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidSpec(format!("theta {theta} is outside (0,1)")));
        }
        for (i, row) in stochastic.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("row {i} of P sums to {sum}")));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0) {
                    return Err(Error::InvalidSpec(format!("P[{i}][{j}] = {v} is negative")));
                }
                if (v > 0.0) != (transition[i][j] == 1) {
                    return Err(Error::InvalidSpec(format!(
                        "support of P differs from A at ({i},{j})"
                    )));
                }
            }
        }
        let flat_a: Vec<u8> = transition.into_iter().flatten().collect();
        let flat_p: Vec<f64> = stochastic.into_iter().flatten().collect();
        let p = match stationary {
            Some(p) => p,
            None => stationary_vector(n, &flat_p),
        };
        if p.len() != n {
            return Err(Error::InvalidSpec("stationary vector has the wrong length".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 || p.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidSpec(format!("stationary vector sums to {total}")));
        }
        for j in 0..n {
            let pj: f64 = (0..n).map(|i| p[i] * flat_p[i * n + j]).sum();
            if (pj - p[j]).abs() > 1e-10 {
                return Err(Error::InvalidSpec("stationary vector is not fixed by P".into()));
            }
        }
        Ok(Self {
            alphabet: n,
            transition: flat_a,
            stochastic: flat_p,
            stationary: p,
            theta,
        })
    }

    /// Full shift on `n` symbols with the uniform Bernoulli measure.
    pub fn full_shift(n: usize, theta: f64) -> Result<Self> {
        Self::bernoulli(vec![1.0 / n as f64; n], theta)
    }

    /// Full shift with i.i.d. symbols drawn from `p`.
    pub fn bernoulli(p: Vec<f64>, theta: f64) -> Result<Self> {
        let n = p.len();
        Self::new(vec![vec![1; n]; n], vec![p.clone(); n], Some(p), theta)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn transition_row(&self, i: usize) -> &[u8] {
        &self.transition[i * self.alphabet..(i + 1) * self.alphabet]
    }

    pub fn stochastic_row(&self, i: usize) -> &[f64] {
        &self.stochastic[i * self.alphabet..(i + 1) * self.alphabet]
    }

    #[inline]
    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.transition[from * self.alphabet + to] == 1
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.stochastic[from * self.alphabet + to]
    }

    /// True when every row of P equals the stationary vector.
    pub fn is_bernoulli(&self) -> bool {
        (0..self.alphabet).all(|i| {
            self.stochastic_row(i)
                .iter()
                .zip(&self.stationary)
                .all(|(a, b)| (a - b).abs() <= 1e-12)
        })
    }

    pub fn is_admissible(&self, word: &[usize]) -> bool {
        !word.is_empty()
            && word.iter().all(|&s| s < self.alphabet)
            && word.windows(2).all(|w| self.allowed(w[0], w[1]))
    }

    /// Smallest symbol that may follow `s`; used to extend cylinders to
    /// representative sequences.
    pub fn default_successor(&self, s: usize) -> usize {
        (0..self.alphabet)
            .find(|&j| self.allowed(s, j))
            .expect("aperiodic matrices have no zero rows")
    }

    /// Deterministic representative sequence of a cylinder: the word
    /// followed by repeated default successors, `extra` symbols long.
    pub fn representative(&self, word: &[usize], extra: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(word.len() + extra);
        out.extend_from_slice(word);
        let mut last = *word.last().expect("nonempty word");
        for _ in 0..extra {
            last = self.default_successor(last);
            out.push(last);
        }
        out
    }

    /// Number of representative symbols needed for `θ^len` to fall below
    /// double precision.
    pub fn tail_length(&self) -> usize {
        ((f64::EPSILON * 0.01).ln() / self.theta.ln()).ceil().clamp(1.0, 400.0) as usize
    }

    pub fn d_theta(&self, u: &Cylinder, v: &Cylinder) -> Result<f64> {
        if u.depth() != v.depth() {
            return Err(Error::InvalidPair(u.depth(), v.depth()));
        }
        Ok(d_theta_words(self.theta, &u.word, &v.word))
    }

    /// `m([w]) = p_{w0} Π P_{w_i w_{i+1}}`.
    pub fn markov_mass(&self, w: &Cylinder) -> Result<f64> {
        if !self.is_admissible(&w.word) {
            return Err(Error::InvalidCylinder(w.word.clone()));
        }
        Ok(self.mass_of(&w.word))
    }

    /// Markov mass of a word assumed admissible.
    #[inline]
    pub fn mass_of(&self, word: &[usize]) -> f64 {
        let mut m = self.stationary[word[0]];
        for w in word.windows(2) {
            m *= self.prob(w[0], w[1]);
        }
        m
    }

    /// Reciprocal Jacobian of the inverse branch `σ_i` at cylinder
    /// resolution: the mass ratio `m([i·w]) / m([w])`.
    pub fn jacobian_weight(&self, i: usize, w: &Cylinder) -> Result<f64> {
        let w0 = *w.word.first().ok_or(Error::InvalidDepth(0))?;
        if i >= self.alphabet || !self.allowed(i, w0) {
            return Err(Error::InadmissibleBranch { from: i, to: w0 });
        }
        Ok(self.stationary[i] * self.prob(i, w0) / self.stationary[w0])
    }

    /// Same weight with forbidden branches mapped to zero.
    ///
    /// The denominator is `Σ_j p_j P_{j w0}` rather than `p_{w0}`. The two
    /// agree for a stationary `p`, and this form makes the weights over `i`
    /// sum to one to rounding, so `P_σ 1 = 1` holds without drift.
    #[inline]
    pub fn branch_weight(&self, i: usize, w0: usize) -> f64 {
        if self.allowed(i, w0) {
            let total: f64 = (0..self.alphabet)
                .map(|j| self.stationary[j] * self.prob(j, w0))
                .sum();
            self.stationary[i] * self.prob(i, w0) / total
        } else {
            0.0
        }
    }

    pub fn word_table(&self, depth: usize) -> Result<WordTable> {
        WordTable::new(self, depth)
    }
}

fn stationary_vector(n: usize, p: &[f64]) -> Vec<f64> {
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..STATIONARY_MAX_ITER {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += v[i] * p[i * n + j];
            }
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let diff = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if diff < STATIONARY_TOL {
            break;
        }
    }
    v
}

/// True iff some boolean power `A^m`, `m ≤ N²`, is strictly positive.
pub fn check_aperiodic(a: &[Vec<u8>]) -> Result<bool> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidSpec("transition matrix must be square".into()));
    }
    if a.iter().flatten().any(|&v| v > 1) {
        return Err(Error::InvalidSpec("transition entries must be 0 or 1".into()));
    }
    let base: Vec<Vec<bool>> = a.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect();
    let mut power = base.clone();
    for _ in 0..n * n {
        if power.iter().flatten().all(|&b| b) {
            return Ok(true);
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] {
                    for j in 0..n {
                        next[i][j] |= base[k][j];
                    }
                }
            }
        }
        power = next;
    }
    Ok(false)
}

/// `Σ_{i<k} θ^i (1 − δ(u_i, v_i))` on equal-length words.
#[inline]
pub fn d_theta_words(theta: f64, u: &[usize], v: &[usize]) -> f64 {
    let mut d = 0.0;
    let mut t = 1.0;
    for (a, b) in u.iter().zip(v) {
        if a != b {
            d += t;
        }
        t *= theta;
    }
    d
}

/// An admissible word naming a cylinder set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cylinder {
    pub word: Vec<usize>,
}

impl Cylinder {
    pub fn new(word: Vec<usize>) -> Self {
        Self { word }
    }

    pub fn depth(&self) -> usize {
        self.word.len()
    }
}

impl From<&[usize]> for Cylinder {
    fn from(w: &[usize]) -> Self {
        Self { word: w.to_vec() }
    }
}

/// Lexicographic ranking of the admissible words of one depth.
#[derive(Debug, Clone)]
pub struct WordTable {
    depth: usize,
    alphabet: usize,
    allowed: Vec<u8>,
    /// `counts[len * N + s]`: admissible words of length `len` starting at `s`.
    counts: Vec<usize>,
    total: usize,
}

impl WordTable {
    pub fn new(spec: &SubshiftSpec, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidDepth(0));
        }
        let n = spec.alphabet;
        let mut counts = vec![0usize; (depth + 1) * n];
        for s in 0..n {
            counts[n + s] = 1;
        }
        for len in 2..=depth {
            for s in 0..n {
                let mut c = 0usize;
                for t in 0..n {
                    if spec.allowed(s, t) {
                        c = c
                            .checked_add(counts[(len - 1) * n + t])
                            .ok_or(Error::InvalidDepth(depth))?;
                    }
                }
                counts[len * n + s] = c;
            }
        }
        let total = (0..n).map(|s| counts[depth * n + s]).sum();
        Ok(Self {
            depth,
            alphabet: n,
            allowed: spec.transition.clone(),
            counts,
            total,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Admissible-word count for an arbitrary depth, without building a table.
    pub fn count(spec: &SubshiftSpec, depth: usize) -> Result<usize> {
        Ok(Self::new(spec, depth)?.total)
    }

    /// Index of `word` among admissible words of this depth.
    pub fn rank(&self, word: &[usize]) -> Option<usize> {
        if word.len() != self.depth {
            return None;
        }
        let n = self.alphabet;
        let mut idx = 0;
        let mut prev: Option<usize> = None;
        for (pos, &s) in word.iter().enumerate() {
            if s >= n {
                return None;
            }
            if let Some(p) = prev {
                if self.allowed[p * n + s] == 0 {
                    return None;
                }
            }
            let len = self.depth - pos;
            for t in 0..s {
                if prev.is_none_or(|p| self.allowed[p * n + t] == 1) {
                    idx += self.counts[len * n + t];
                }
            }
            prev = Some(s);
        }
        Some(idx)
    }

    pub fn unrank_into(&self, mut idx: usize, out: &mut Vec<usize>) {
        debug_assert!(idx < self.total);
        let n = self.alphabet;
        out.clear();
        let mut prev: Option<usize> = None;
        for pos in 0..self.depth {
            let len = self.depth - pos;
            for t in 0..n {
                if prev.is_some_and(|p| self.allowed[p * n + t] == 0) {
                    continue;
                }
                let c = self.counts[len * n + t];
                if idx < c {
                    out.push(t);
                    prev = Some(t);
                    break;
                }
                idx -= c;
            }
        }
    }

    pub fn unrank(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth);
        self.unrank_into(idx, &mut out);
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.total).map(|i| self.unrank(i))
    }
}

/// Admissible words of length `depth`, lexicographically sorted.
pub fn admissible_words(spec: &SubshiftSpec, depth: usize) -> Result<Vec<Cylinder>> {
    let table = WordTable::new(spec, depth)?;
    Ok(table.iter().map(Cylinder::new).collect())
}

/// A function on `Σ⁺_A` that is constant on depth-`k` cylinders.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunction {
    pub depth: usize,
    pub values: Vec<f64>,
}

impl CylinderFunction {
    pub fn new(spec: &SubshiftSpec, depth: usize, values: Vec<f64>) -> Result<Self> {
        let count = WordTable::count(spec, depth)?;
        if values.len() != count {
            return Err(Error::InvalidInput(format!(
                "expected {count} values at depth {depth}, got {}",
                values.len()
            )));
        }
        Ok(Self { depth, values })
    }

    pub fn constant(spec: &SubshiftSpec, depth: usize, c: f64) -> Result<Self> {
        let count = WordTable::count(spec, depth)?;
        Ok(Self { depth, values: vec![c; count] })
    }

    /// Evaluates `f` on every admissible word of the depth.
    pub fn from_fn(
        spec: &SubshiftSpec,
        depth: usize,
        f: impl Fn(&[usize]) -> f64,
    ) -> Result<Self> {
        let table = WordTable::new(spec, depth)?;
        let values = table.iter().map(|w| f(&w)).collect();
        Ok(Self { depth, values })
    }

    /// `∫ φ dm`.
    pub fn integrate(&self, spec: &SubshiftSpec) -> f64 {
        let table = WordTable::new(spec, self.depth).expect("depth validated at construction");
        let mut word = Vec::with_capacity(self.depth);
        let mut total = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            table.unrank_into(i, &mut word);
            total += spec.mass_of(&word) * v;
        }
        total
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `(P_σ φ)(w) = Σ_i g_i(w) φ(i·w)`; maps depth `k` to depth `k−1`.
pub fn perron_frobenius(spec: &SubshiftSpec, phi: &CylinderFunction) -> Result<CylinderFunction> {
    let k = phi.depth;
    if k < 2 {
        return Err(Error::CannotCoarsen);
    }
    let out_table = WordTable::new(spec, k - 1)?;
    let in_table = WordTable::new(spec, k)?;
    let n = spec.alphabet;
    let values = (0..out_table.len())
        .into_par_iter()
        .map(|j| {
            let mut pre = Vec::with_capacity(k);
            pre.push(0);
            pre.extend(out_table.unrank(j));
            let v0 = pre[1];
            let mut acc = 0.0;
            for i in 0..n {
                if !spec.allowed(i, v0) {
                    continue;
                }
                pre[0] = i;
                let idx = in_table.rank(&pre).expect("preimage word is admissible");
                acc += spec.branch_weight(i, v0) * phi.values[idx];
            }
            acc
        })
        .collect();
    Ok(CylinderFunction { depth: k - 1, values })
}

/// How the Lipschitz estimators visit word pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSampling {
    /// Every unordered pair of distinct words.
    Exact,
    /// A fixed budget of random pairs, half of them sharing a random prefix.
    Sampled { pairs: usize, seed: u64 },
    /// Exact when the word count is at most `limit`, otherwise sampled with
    /// [`DEFAULT_PAIR_BUDGET`] and seed 0.
    Auto { limit: usize },
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling::Auto { limit: EXACT_PAIR_LIMIT }
    }
}

impl PairSampling {
    fn resolve(self, words: usize) -> PairSampling {
        match self {
            PairSampling::Auto { limit } if words <= limit => PairSampling::Exact,
            PairSampling::Auto { .. } => PairSampling::Sampled {
                pairs: DEFAULT_PAIR_BUDGET,
                seed: 0,
            },
            other => other,
        }
    }
}

/// Maximum of `ratio(i, j, d_θ(w_i, w_j))` over the pairs chosen by
/// `sampling`. Same-word pairs are never visited.
pub(crate) fn max_over_pairs<F>(
    spec: &SubshiftSpec,
    table: &WordTable,
    sampling: PairSampling,
    ratio: F,
) -> f64
where
    F: Fn(usize, usize, f64) -> f64 + Sync,
{
    let m = table.len();
    if m < 2 {
        return 0.0;
    }
    let theta = spec.theta;
    match sampling.resolve(m) {
        PairSampling::Exact | PairSampling::Auto { .. } => {
            let words: Vec<Vec<usize>> = table.iter().collect();
            (0..m)
                .into_par_iter()
                .map(|i| {
                    let mut best = 0.0f64;
                    for j in (i + 1)..m {
                        let d = d_theta_words(theta, &words[i], &words[j]);
                        best = best.max(ratio(i, j, d));
                    }
                    best
                })
                .reduce(|| 0.0, f64::max)
        }
        PairSampling::Sampled { pairs, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen = Vec::with_capacity(pairs);
            let mut scratch = Vec::new();
            while chosen.len() < pairs {
                let i = rng.gen_range(0..m);
                let j = if chosen.len() % 2 == 0 {
                    rng.gen_range(0..m)
                } else {
                    let u = table.unrank(i);
                    let q = rng.gen_range(0..u.len());
                    match sibling(spec, &u, q, &mut rng, &mut scratch) {
                        Some(v) => table.rank(&v).expect("sibling is admissible"),
                        None => continue,
                    }
                };
                if i != j {
                    chosen.push((i, j));
                }
            }
            chosen
                .par_iter()
                .map(|&(i, j)| {
                    let d = d_theta_words(theta, &table.unrank(i), &table.unrank(j));
                    ratio(i, j, d)
                })
                .reduce(|| 0.0, f64::max)
        }
    }
}

/// A word sharing `u[..q]`, differing at `q`, and agreeing with `u` after `q`
/// where the transitions allow it.
fn sibling(
    spec: &SubshiftSpec,
    u: &[usize],
    q: usize,
    rng: &mut ChaCha8Rng,
    scratch: &mut Vec<usize>,
) -> Option<Vec<usize>> {
    scratch.clear();
    scratch.extend((0..spec.alphabet).filter(|&s| {
        s != u[q] && (q == 0 || spec.allowed(u[q - 1], s))
    }));
    if scratch.is_empty() {
        return None;
    }
    let mut v = u[..q].to_vec();
    v.push(scratch[rng.gen_range(0..scratch.len())]);
    for &s in &u[q + 1..] {
        let last = *v.last().unwrap();
        v.push(if spec.allowed(last, s) { s } else { spec.default_successor(last) });
    }
    Some(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaNorm {
    pub sup: f64,
    pub lip: f64,
    pub norm: f64,
}

/// `‖φ‖_θ = ‖φ‖_∞ + |φ|_θ` at cylinder resolution.
pub fn theta_norm(spec: &SubshiftSpec, phi: &CylinderFunction, sampling: PairSampling) -> ThetaNorm {
    let sup = phi.sup();
    let table = WordTable::new(spec, phi.depth).expect("depth validated at construction");
    let vals = &phi.values;
    let lip = max_over_pairs(spec, &table, sampling, |i, j, d| (vals[i] - vals[j]).abs() / d);
    ThetaNorm { sup, lip, norm: sup + lip }
}

/// A random zero-mean function of the form `Σ_j θ^j ξ_j(w_j)` with
/// `ξ_j(s) ~ U[−1, 1]`, projected onto `∫ φ dm = 0`. These have bounded
/// θ-Lipschitz constant uniformly in the depth.
pub fn random_lipschitz_function<R: Rng>(
    spec: &SubshiftSpec,
    depth: usize,
    rng: &mut R,
) -> Result<CylinderFunction> {
    let n = spec.alphabet;
    let xi: Vec<f64> = (0..depth * n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let theta = spec.theta;
    let mut phi = CylinderFunction::from_fn(spec, depth, |w| {
        let mut t = 1.0;
        let mut acc = 0.0;
        for (j, &s) in w.iter().enumerate() {
            acc += t * xi[j * n + s];
            t *= theta;
        }
        acc
    })?;
    let mean = phi.integrate(spec);
    phi.values.iter_mut().for_each(|v| *v -= mean);
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisGap {
    /// Fitted contraction rate of `P_σ` on zero-mean functions.
    pub r: f64,
    /// Smallest `D` with `‖P_σ^j φ‖_θ ≤ D r^j ‖φ‖_θ` over all trials.
    pub d: f64,
    /// Worst observed ratio `‖P_σ^j φ‖_θ / ‖φ‖_θ` for each `j`.
    pub max_ratios: Vec<f64>,
}

/// Estimates `r` and `D` in `‖P_σ^n φ‖_θ ≤ D r^n ‖φ‖_θ` from random
/// zero-mean test functions. Trial `t` uses seed `seed + t`.
pub fn estimate_basis_gap(
    spec: &SubshiftSpec,
    depth: usize,
    iterations: usize,
    trials: usize,
    seed: u64,
) -> Result<BasisGap> {
    if depth < 2 || iterations == 0 || iterations > depth - 1 {
        return Err(Error::InvalidInput(format!(
            "{iterations} iterations need depth of at least {}",
            iterations + 1
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let ratios: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut phi = random_lipschitz_function(spec, depth, &mut rng)?;
            let base = theta_norm(spec, &phi, PairSampling::default()).norm;
            if base == 0.0 {
                return Ok(Vec::new());
            }
            let mut out = vec![1.0];
            for _ in 0..iterations {
                phi = perron_frobenius(spec, &phi)?;
                out.push(theta_norm(spec, &phi, PairSampling::default()).norm / base);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let ratios: Vec<Vec<f64>> = ratios.into_iter().filter(|r| !r.is_empty()).collect();
    if ratios.is_empty() {
        return Err(Error::InvalidInput("every trial was degenerate".into()));
    }
    let max_ratios: Vec<f64> = (0..=iterations)
        .map(|j| ratios.iter().map(|r| r[j]).fold(0.0, f64::max))
        .collect();
    let fit = fit_tail_rate(&max_ratios)
        .ok_or_else(|| Error::InvalidInput("too few nonzero ratios to fit a rate".into()))?;
    if fit.rate >= 1.0 {
        return Err(Error::NonContraction(fit.rate));
    }
    let r = fit.rate;
    let d = ratios
        .iter()
        .flat_map(|row| row.iter().enumerate().map(|(j, v)| v / r.powi(j as i32)))
        .fold(1.0, f64::max);
    Ok(BasisGap { r, d, max_ratios })
}
