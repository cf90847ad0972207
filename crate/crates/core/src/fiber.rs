//! Skew products `F(x, z) = (σx, G(x, z))` with contracting fibers.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::FiberSpace;
use crate::symbolic::{d_theta_words, SubshiftSpec};

const CERT_TOL: f64 = 1e-9;
const CERT_SEQUENCE_LEN: usize = 64;

/// The fiber-map families the crate can certify.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiberKind {
    /// `G(x, z) = a_{x0} z + b_{x0}`.
    FirstSymbolAffine { a: Vec<f64>, b: Vec<f64> },
    /// `G(x, z) = a z + c0 (1 − θ) Σ_i x_i θ^i`.
    SequenceAffine { a: f64, c0: f64 },
    /// Point maps of a finite fiber, one per first symbol.
    Table { maps: Vec<Vec<usize>> },
}

/// A fiber map frozen at one base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiberMap<'a> {
    Affine { a: f64, b: f64 },
    Table(&'a [usize]),
}

impl FiberMap<'_> {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            FiberMap::Affine { a, b } => a * z + b,
            FiberMap::Table(m) => m[z as usize] as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberSystem {
    spec: Arc<SubshiftSpec>,
    space: Arc<FiberSpace>,
    kind: FiberKind,
    alpha: f64,
    h: f64,
    /// For sequence-affine systems: `Σ_{j≥1} θ^{j−1} x_j` along the default
    /// extension that follows each last symbol.
    tails: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub alpha_declared: f64,
    pub alpha_observed: f64,
    pub h_declared: f64,
    pub h_observed: f64,
}

impl FiberSystem {
    /// Builds a system and derives `α` and `H` for its family. Declared
    /// values override the derived ones; [`FiberSystem::certify_constants`]
    /// checks them.
    pub fn new(
        spec: Arc<SubshiftSpec>,
        space: Arc<FiberSpace>,
        kind: FiberKind,
        alpha: Option<f64>,
        h: Option<f64>,
    ) -> Result<Self> {
        let n = spec.alphabet();
        let theta = spec.theta();
        let (derived_alpha, derived_h) = match (&kind, space.as_ref()) {
            (FiberKind::FirstSymbolAffine { a, b }, FiberSpace::Interval { lo, hi }) => {
                if a.len() != n || b.len() != n {
                    return Err(Error::InvalidSystem(format!("need {n} affine maps")));
                }
                for (i, (&ai, &bi)) in a.iter().zip(b).enumerate() {
                    check_affine_range(lo, hi, ai, bi, bi, i)?;
                }
                let alpha = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (alpha, (hi - lo) / theta)
            }
            (FiberKind::SequenceAffine { a, c0 }, FiberSpace::Interval { lo, hi }) => {
                if !(*c0 >= 0.0) {
                    return Err(Error::InvalidSystem("c0 must be nonnegative".into()));
                }
                let c_max = c0 * (n - 1) as f64;
                check_affine_range(lo, hi, *a, 0.0, c_max, 0)?;
                (a.abs(), c0 * (1.0 - theta) * (n - 1) as f64)
            }
            (FiberKind::Table { maps }, FiberSpace::Finite { dist }) => {
                if maps.len() != n || maps.iter().any(|m| m.len() != dist.len()) {
                    return Err(Error::InvalidSystem(format!(
                        "need {n} point maps on {} points",
                        dist.len()
                    )));
                }
                if maps.iter().flatten().any(|&p| p >= dist.len()) {
                    return Err(Error::InvalidSystem("table maps outside the space".into()));
                }
                table_constants(maps, dist)
            }
            _ => {
                return Err(Error::InvalidSystem(
                    "fiber kind does not match the fiber space".into(),
                ))
            }
        };
        let alpha = alpha.unwrap_or(derived_alpha);
        let h = h.unwrap_or(derived_h);
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidSystem(format!("contraction rate {alpha} is not in [0,1)")));
        }
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidSystem(format!("horizontal bound {h} is invalid")));
        }
        let tails = (0..n).map(|s| default_tail(&spec, s)).collect();
        Ok(Self { spec, space, kind, alpha, h, tails })
    }

    pub fn spec(&self) -> &Arc<SubshiftSpec> {
        &self.spec
    }

    pub fn space(&self) -> &Arc<FiberSpace> {
        &self.space
    }

    pub fn kind(&self) -> &FiberKind {
        &self.kind
    }

    /// Vertical contraction rate.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Horizontal Lipschitz bound.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// True when `G` depends on the base point only through its first symbol.
    pub fn is_first_symbol(&self) -> bool {
        !matches!(self.kind, FiberKind::SequenceAffine { .. })
    }

    /// `z ↦ G(rep(w), z)` for an admissible word.
    #[inline]
    pub fn fiber_map(&self, word: &[usize]) -> FiberMap<'_> {
        match &self.kind {
            FiberKind::FirstSymbolAffine { a, b } => FiberMap::Affine { a: a[word[0]], b: b[word[0]] },
            FiberKind::SequenceAffine { a, c0 } => {
                let theta = self.spec.theta();
                let mut t = 1.0;
                let mut s = 0.0;
                for &x in word {
                    s += t * x as f64;
                    t *= theta;
                }
                s += t * self.tails[*word.last().expect("nonempty word")];
                FiberMap::Affine { a: *a, b: c0 * (1.0 - theta) * s }
            }
            FiberKind::Table { maps } => FiberMap::Table(&maps[word[0]]),
        }
    }

    /// `G(x, z)` on an explicit (long) symbol sequence, with no
    /// representative extension.
    pub fn apply_sequence(&self, x: &[usize], z: f64) -> f64 {
        match &self.kind {
            FiberKind::SequenceAffine { a, c0 } => {
                let theta = self.spec.theta();
                let mut t = 1.0;
                let mut s = 0.0;
                for &v in x {
                    s += t * v as f64;
                    t *= theta;
                }
                a * z + c0 * (1.0 - theta) * s
            }
            _ => self.fiber_map(x).apply(z),
        }
    }

    /// Upper bound on the error of evaluating `G` at a depth-`k`
    /// representative instead of the true base point.
    pub fn representative_error(&self, depth: usize) -> f64 {
        if self.is_first_symbol() {
            0.0
        } else {
            let theta = self.spec.theta();
            self.h * theta.powi(depth as i32) / (1.0 - theta)
        }
    }

    /// `[z_0, …, z_n]` with `z_{j+1} = G(σ^j rep(w), z_j)`.
    pub fn orbit(&self, word: &[usize], z0: f64, steps: usize) -> Result<Vec<f64>> {
        if word.len() < steps {
            return Err(Error::InsufficientSymbols { needed: steps, available: word.len() });
        }
        if !self.space.contains(z0) {
            return Err(Error::InvalidInput(format!("{z0} is outside the fiber space")));
        }
        let mut out = Vec::with_capacity(steps + 1);
        out.push(z0);
        let mut z = z0;
        for j in 0..steps {
            z = self.fiber_map(&word[j..]).apply(z);
            out.push(z);
        }
        Ok(out)
    }

    /// Empirical maxima of the vertical and horizontal Lipschitz ratios over
    /// random samples. Fails with a witness if either exceeds its declared
    /// value by more than `1e-9`.
    pub fn certify_constants(&self, samples: usize, seed: u64) -> Result<Certificate> {
        if samples == 0 {
            return Err(Error::InvalidInput("at least one sample is required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = self.space.sample_points(2);
        let theta = self.spec.theta();
        let mut alpha_obs = 0.0f64;
        let mut h_obs = 0.0f64;
        for s in 0..samples {
            let x = random_sequence(&self.spec, CERT_SEQUENCE_LEN, &mut rng);
            let (z1, z2) = if s == 0 && points.len() >= 2 {
                (points[0], points[points.len() - 1])
            } else {
                (self.random_point(&mut rng), self.random_point(&mut rng))
            };
            let dz = self.space.dist(z1, z2);
            if dz > 0.0 {
                let r = self.space.dist(self.apply_sequence(&x, z1), self.apply_sequence(&x, z2)) / dz;
                if r > self.alpha + CERT_TOL {
                    return Err(Error::Certification(format!(
                        "vertical ratio {r} exceeds {} at x = {:?}, z = ({z1}, {z2})",
                        self.alpha,
                        &x[..8]
                    )));
                }
                alpha_obs = alpha_obs.max(r);
            }
            let q = rng.gen_range(0..8usize);
            let y = diverging_sequence(&self.spec, &x, q, &mut rng);
            let dx = d_theta_words(theta, &x, &y);
            if dx > 0.0 {
                let z = self.random_point(&mut rng);
                let r = self.space.dist(self.apply_sequence(&x, z), self.apply_sequence(&y, z)) / dx;
                if r > self.h + CERT_TOL {
                    return Err(Error::Certification(format!(
                        "horizontal ratio {r} exceeds {} at z = {z}",
                        self.h
                    )));
                }
                h_obs = h_obs.max(r);
            }
        }
        Ok(Certificate {
            alpha_declared: self.alpha,
            alpha_observed: alpha_obs,
            h_declared: self.h,
            h_observed: h_obs,
        })
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.space.as_ref() {
            FiberSpace::Interval { lo, hi } => rng.gen_range(*lo..=*hi),
            FiberSpace::Finite { dist } => rng.gen_range(0..dist.len()) as f64,
        }
    }
}

fn check_affine_range(lo: &f64, hi: &f64, a: f64, b_min: f64, b_max: f64, i: usize) -> Result<()> {
    if !a.is_finite() || !b_min.is_finite() || !b_max.is_finite() {
        return Err(Error::InvalidSystem(format!("map {i} has non-finite coefficients")));
    }
    for z in [*lo, *hi] {
        for b in [b_min, b_max] {
            let to = a * z + b;
            if to < lo - 1e-12 || to > hi + 1e-12 {
                return Err(Error::RangeViolation { from: z, to });
            }
        }
    }
    Ok(())
}

fn table_constants(maps: &[Vec<usize>], dist: &[Vec<f64>]) -> (f64, f64) {
    let m = dist.len();
    let mut alpha = 0.0f64;
    let mut h = 0.0f64;
    for f in maps {
        for p in 0..m {
            for q in (p + 1)..m {
                alpha = alpha.max(dist[f[p]][f[q]] / dist[p][q]);
            }
        }
    }
    // Base points with different first symbols are at distance ≥ 1; with the
    // same first symbol the maps coincide.
    for f in maps {
        for g in maps {
            for z in 0..m {
                h = h.max(dist[f[z]][g[z]]);
            }
        }
    }
    (alpha, h)
}

fn default_tail(spec: &SubshiftSpec, last: usize) -> f64 {
    let theta = spec.theta();
    let tail = spec.representative(&[last], spec.tail_length());
    let mut t = 1.0;
    let mut s = 0.0;
    for &x in &tail[1..] {
        s += t * x as f64;
        t *= theta;
    }
    s
}

/// A random admissible sequence: uniform first symbol, then uniform among
/// allowed successors.
pub(crate) fn random_sequence<R: Rng>(spec: &SubshiftSpec, len: usize, rng: &mut R) -> Vec<usize> {
    let n = spec.alphabet();
    let mut x = Vec::with_capacity(len);
    x.push(rng.gen_range(0..n));
    while x.len() < len {
        let last = *x.last().unwrap();
        let options: Vec<usize> = (0..n).filter(|&j| spec.allowed(last, j)).collect();
        x.push(options[rng.gen_range(0..options.len())]);
    }
    x
}

/// Shares `x[..q]`, then continues as an independent random admissible
/// sequence.
fn diverging_sequence<R: Rng>(spec: &SubshiftSpec, x: &[usize], q: usize, rng: &mut R) -> Vec<usize> {
    let n = spec.alphabet();
    let mut y = x[..q].to_vec();
    while y.len() < x.len() {
        let options: Vec<usize> = match y.last() {
            Some(&last) => (0..n).filter(|&j| spec.allowed(last, j)).collect(),
            None => (0..n).collect(),
        };
        y.push(options[rng.gen_range(0..options.len())]);
    }
    y
}
