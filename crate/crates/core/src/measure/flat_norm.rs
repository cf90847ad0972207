use std::collections::VecDeque;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::{normalize_atoms, Atom, FiberSpace, FiniteSignedMeasure};
use crate::error::{Error, Result};

pub const MAX_ORACLE_ATOMS: usize = 4;

/// Bounded-Lipschitz norm of an atomic signed measure: the optimum of
///
/// ```text
/// maximize Σ w_j g_j   subject to   |g_j| ≤ 1,  |g_i − g_j| ≤ d(x_i, x_j).
/// ```
///
/// On an interval the pair constraints collapse to neighbouring atoms and the
/// program is solved exactly by a chain recursion over concave piecewise
/// linear value functions. Finite spaces go through the LP solver. Atoms are
/// expected in normalized form.
pub fn wk_norm(space: &FiberSpace, atoms: &[Atom]) -> f64 {
    if atoms.is_empty() {
        return 0.0;
    }
    let tv: f64 = atoms.iter().map(|a| a.weight.abs()).sum();
    let mass: f64 = atoms.iter().map(|a| a.weight).sum();
    if atoms.iter().all(|a| a.weight >= 0.0) || atoms.iter().all(|a| a.weight <= 0.0) {
        return mass.abs();
    }
    let value = match space {
        FiberSpace::Interval { .. } => chain_optimum(atoms),
        // The constant test function ±1 is always feasible, so |mass| is a
        // valid floor if the solver ever gives up.
        FiberSpace::Finite { .. } => wk_norm_lp(space, atoms).unwrap_or(mass.abs()),
    };
    value.clamp(0.0, tv)
}

/// Flat distance `‖μ − ν‖_W`.
pub fn wk_distance(a: &FiniteSignedMeasure, b: &FiniteSignedMeasure) -> f64 {
    a.sub(b).wk_norm()
}

/// The same program handed to the simplex solver with every pair constraint
/// written out in both directions. Kept public for cross-checking.
pub fn wk_norm_lp(space: &FiberSpace, atoms: &[Atom]) -> Result<f64> {
    if atoms.is_empty() {
        return Ok(0.0);
    }
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = atoms.iter().map(|a| problem.add_var(a.weight, (-1.0, 1.0))).collect();
    for i in 0..atoms.len() {
        for j in 0..atoms.len() {
            if i != j {
                let d = space.dist(atoms[i].pos, atoms[j].pos);
                if d < 2.0 {
                    problem.add_constraint([(vars[i], 1.0), (vars[j], -1.0)], ComparisonOp::Le, d);
                }
            }
        }
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::Solver(e.to_string()))?
        .into_solution()
        .map_err(|_| Error::Solver("solve interrupted".into()))?;
    Ok(solution.objective().max(0.0))
}

/// Exhaustive grid search over test-function values, used as an
/// independent check on [`wk_norm`]. The last coordinate is set to the best
/// end of its feasible interval, so the result is a feasible value within
/// `n·grid_step` of the optimum.
pub fn wk_oracle(space: &FiberSpace, atoms: &[Atom], grid_step: f64) -> Result<f64> {
    if atoms.len() > MAX_ORACLE_ATOMS {
        return Err(Error::OracleTooLarge(atoms.len()));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidResolution(grid_step));
    }
    let mut atoms = atoms.to_vec();
    normalize_atoms(&mut atoms);
    if atoms.is_empty() {
        return Ok(0.0);
    }
    let steps = (2.0 / grid_step).round() as i64;
    let grid: Vec<f64> = (0..=steps).map(|i| (-1.0 + i as f64 * grid_step).min(1.0)).collect();
    let n = atoms.len();
    let d: Vec<Vec<f64>> = atoms
        .iter()
        .map(|a| atoms.iter().map(|b| space.dist(a.pos, b.pos)).collect())
        .collect();
    let mut g = vec![0.0; n];
    let mut best = f64::NEG_INFINITY;
    search(&atoms, &d, &grid, &mut g, 0, 0.0, &mut best);
    Ok(best.max(0.0))
}

fn search(
    atoms: &[Atom],
    d: &[Vec<f64>],
    grid: &[f64],
    g: &mut [f64],
    k: usize,
    acc: f64,
    best: &mut f64,
) {
    let (lo, hi) = (0..k).fold((-1.0f64, 1.0f64), |(lo, hi), j| {
        (lo.max(g[j] - d[k][j]), hi.min(g[j] + d[k][j]))
    });
    if lo > hi + 1e-12 {
        return;
    }
    if k + 1 == atoms.len() {
        let v = if atoms[k].weight >= 0.0 { hi } else { lo };
        *best = best.max(acc + atoms[k].weight * v);
        return;
    }
    for &v in grid {
        if v < lo - 1e-12 || v > hi + 1e-12 {
            continue;
        }
        g[k] = v;
        search(atoms, d, grid, g, k + 1, acc + atoms[k].weight * v, best);
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    len: f64,
    /// Slope before the lazy offset is added.
    raw: f64,
}

/// Concave piecewise-linear function on `[−1, 1]`, stored as its value at
/// `−1` plus segments split at the maximum: `rising` holds the segments of
/// positive slope in order, `falling` the rest.
struct ValueFunction {
    start: f64,
    offset: f64,
    rising: VecDeque<Segment>,
    falling: VecDeque<Segment>,
}

impl ValueFunction {
    fn linear(w: f64) -> Self {
        let mut f = Self {
            start: 0.0,
            offset: 0.0,
            rising: VecDeque::new(),
            falling: VecDeque::new(),
        };
        f.falling.push_back(Segment { len: 2.0, raw: 0.0 });
        f.add_linear(w);
        f
    }

    #[inline]
    fn slope(&self, s: &Segment) -> f64 {
        s.raw + self.offset
    }

    /// `f(g) ← f(g) + w g`.
    fn add_linear(&mut self, w: f64) {
        self.offset += w;
        self.start -= w;
        while let Some(s) = self.falling.front() {
            if self.slope(s) > 0.0 {
                let s = self.falling.pop_front().unwrap();
                self.rising.push_back(s);
            } else {
                break;
            }
        }
        while let Some(s) = self.rising.back() {
            if self.slope(s) <= 0.0 {
                let s = self.rising.pop_back().unwrap();
                self.falling.push_front(s);
            } else {
                break;
            }
        }
    }

    /// `f(g) ← max_{|h − g| ≤ d} f(h)` restricted back to `[−1, 1]`: a flat
    /// piece of length `2d` is inserted at the maximum and `d` is trimmed
    /// from each end.
    fn dilate(&mut self, d: f64) {
        if d <= 0.0 {
            return;
        }
        let d = d.min(2.0);
        self.falling.push_front(Segment { len: 2.0 * d, raw: -self.offset });
        let mut left = d;
        while left > 0.0 {
            let off = self.offset;
            let queue = if self.rising.is_empty() { &mut self.falling } else { &mut self.rising };
            let Some(seg) = queue.front_mut() else { break };
            let take = seg.len.min(left);
            self.start += take * (seg.raw + off);
            seg.len -= take;
            left -= take;
            if seg.len <= 0.0 {
                queue.pop_front();
            }
        }
        let mut right = d;
        while right > 0.0 {
            let queue = if self.falling.is_empty() { &mut self.rising } else { &mut self.falling };
            let Some(seg) = queue.back_mut() else { break };
            let take = seg.len.min(right);
            seg.len -= take;
            right -= take;
            if seg.len <= 0.0 {
                queue.pop_back();
            }
        }
    }

    fn maximum(&self) -> f64 {
        self.start + self.rising.iter().map(|s| s.len * self.slope(s)).sum::<f64>()
    }
}

fn chain_optimum(atoms: &[Atom]) -> f64 {
    let mut f = ValueFunction::linear(atoms[0].weight);
    for pair in atoms.windows(2) {
        f.dilate(pair[1].pos - pair[0].pos);
        f.add_linear(pair[1].weight);
    }
    f.maximum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn atoms(pairs: &[(f64, f64)]) -> Vec<Atom> {
        let mut a: Vec<Atom> = pairs.iter().map(|&(p, w)| Atom::new(p, w)).collect();
        normalize_atoms(&mut a);
        a
    }

    const UNIT: FiberSpace = FiberSpace::Interval { lo: 0.0, hi: 1.0 };

    #[test]
    fn reference_values() {
        assert_eq!(wk_norm(&UNIT, &atoms(&[(0.2, 0.3), (0.9, 0.7)])), 1.0);
        assert!((wk_norm(&UNIT, &atoms(&[(0.0, 1.0), (0.5, -1.0)])) - 0.5).abs() < 1e-12);
        assert_eq!(wk_norm(&UNIT, &atoms(&[(0.4, 1.0), (0.4, -1.0)])), 0.0);
        assert_eq!(wk_norm(&UNIT, &[]), 0.0);
        let o = wk_oracle(&UNIT, &atoms(&[(0.0, 1.0), (0.5, -1.0)]), 0.01).unwrap();
        assert!((o - 0.5).abs() <= 0.02);
        let o = wk_oracle(&UNIT, &atoms(&[(0.3, 0.7)]), 0.01).unwrap();
        assert!((o - 0.7).abs() <= 0.01);
        assert_eq!(wk_oracle(&UNIT, &[], 0.01).unwrap(), 0.0);
        assert!(matches!(
            wk_oracle(&UNIT, &atoms(&[(0.0, 1.0), (0.1, 1.0), (0.2, 1.0), (0.3, 1.0), (0.4, -1.0)]), 0.1),
            Err(Error::OracleTooLarge(5))
        ));
    }

    #[test]
    fn dipole_closed_form() {
        for &d in &[0.01, 0.3, 0.75, 1.0] {
            let v = wk_norm(&UNIT, &atoms(&[(0.0, 1.0), (d, -1.0)]));
            assert!((v - d.min(2.0)).abs() < 1e-12);
        }
        // Unbalanced dipole: g(0) = 1, g(d) = 1 − d.
        let v = wk_norm(&UNIT, &atoms(&[(0.0, 2.0), (0.25, -1.0)]));
        assert!((v - (2.0 - 0.75)).abs() < 1e-12);
    }

    #[test]
    fn chain_matches_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..300 {
            let n = rng.gen_range(1..12);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let a = atoms(&pairs);
            let lp = wk_norm_lp(&UNIT, &a).unwrap();
            let dp = wk_norm(&UNIT, &a);
            assert!((lp - dp).abs() < 1e-9, "lp {lp} dp {dp} on {a:?}");
        }
    }

    #[test]
    fn chain_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.gen_range(1..=3);
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let a = atoms(&pairs);
            let exact = wk_norm(&UNIT, &a);
            let grid = wk_oracle(&UNIT, &a, 0.02).unwrap();
            assert!(exact - grid >= -1e-9 && exact - grid <= a.len() as f64 * 0.02 + 1e-9);
        }
    }

    #[test]
    fn finite_space_uses_the_metric() {
        let space = FiberSpace::finite(vec![
            vec![0.0, 0.3, 0.5],
            vec![0.3, 0.0, 0.4],
            vec![0.5, 0.4, 0.0],
        ])
        .unwrap();
        let a = atoms(&[(0.0, 1.0), (2.0, -1.0)]);
        assert!((wk_norm(&space, &a) - 0.5).abs() < 1e-9);
        let b = atoms(&[(0.0, 1.0), (1.0, -0.5), (2.0, -0.5)]);
        assert!((wk_norm(&space, &b) - 0.4).abs() < 1e-9);
        let o = wk_oracle(&space, &b, 0.01).unwrap();
        assert!((wk_norm(&space, &b) - o).abs() <= 0.03);
    }

    #[test]
    fn long_chain_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<(f64, f64)> = (0..5000)
            .map(|i| (i as f64 / 5000.0, rng.gen_range(-1.0..1.0) / 5000.0))
            .collect();
        let a = atoms(&pairs);
        let v = wk_norm(&UNIT, &a);
        let tv: f64 = a.iter().map(|x| x.weight.abs()).sum();
        assert!(v >= 0.0 && v <= tv);
        let lp = wk_norm_lp(&UNIT, &a[..200]).unwrap();
        assert!((lp - wk_norm(&UNIT, &a[..200])).abs() < 1e-9);
    }
}
