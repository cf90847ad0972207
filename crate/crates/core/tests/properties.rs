use std::sync::Arc;

use fiberlab::catalog;
use fiberlab::cli::config::parse_number;
use fiberlab::measure::{normalize_atoms, wk_distance, wk_norm, wk_norm_lp, wk_oracle, Atom, FiberSpace, FiniteSignedMeasure};
use fiberlab::symbolic::{d_theta_words, CylinderFunction, perron_frobenius, random_lipschitz_function, WordTable};
use fiberlab::transfer::{transfer_step, weak_norm, LeafwiseMeasure};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit() -> Arc<FiberSpace> {
    Arc::new(FiberSpace::unit())
}

fn atoms(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..=1.0f64, -1.0..=1.0f64), 0..=max)
}

fn measure(pairs: &[(f64, f64)]) -> FiniteSignedMeasure {
    FiniteSignedMeasure::from_pairs(unit(), pairs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn flat_norm_sits_between_mass_and_variation(pairs in atoms(12)) {
        let mu = measure(&pairs);
        let n = mu.wk_norm();
        prop_assert!(n >= mu.total_mass().abs() - 1e-12);
        prop_assert!(n <= mu.total_variation() + 1e-12);
    }

    #[test]
    fn flat_norm_is_a_norm(a in atoms(6), b in atoms(6), c in -3.0..3.0f64) {
        let (mu, nu) = (measure(&a), measure(&b));
        let sum = mu.combine(1.0, &nu, 1.0);
        prop_assert!(sum.wk_norm() <= mu.wk_norm() + nu.wk_norm() + 1e-9);
        prop_assert!((mu.scaled(c).wk_norm() - c.abs() * mu.wk_norm()).abs() <= 1e-9);
        prop_assert!((wk_distance(&mu, &nu) - wk_distance(&nu, &mu)).abs() <= 1e-12);
    }

    #[test]
    fn chain_recursion_matches_the_linear_program(pairs in atoms(8)) {
        let mu = measure(&pairs);
        let lp = wk_norm_lp(&FiberSpace::unit(), mu.atoms()).unwrap();
        prop_assert!((mu.wk_norm() - lp).abs() <= 1e-7, "chain {} lp {}", mu.wk_norm(), lp);
    }

    #[test]
    fn grid_search_never_exceeds_the_optimum(pairs in atoms(4)) {
        let mu = measure(&pairs);
        let step = 0.05;
        let oracle = wk_oracle(&FiberSpace::unit(), mu.atoms(), step).unwrap();
        prop_assert!(oracle <= mu.wk_norm() + 1e-9);
        prop_assert!(mu.wk_norm() - oracle <= mu.len() as f64 * step + 1e-9);
    }

    #[test]
    fn compression_moves_little_mass(pairs in atoms(20), k in 2..10i32) {
        let mu = measure(&pairs);
        let delta = 2f64.powi(-k);
        let c = mu.compress(delta).unwrap();
        prop_assert!((c.total_mass() - mu.total_mass()).abs() <= 1e-12);
        prop_assert!(wk_distance(&c, &mu) <= delta / 2.0 * mu.total_variation() + 1e-12);
        prop_assert!(c.atoms().windows(2).all(|w| w[1].pos - w[0].pos >= delta * 0.5));
    }

    #[test]
    fn pushforward_by_a_contraction_shrinks_distances(a in atoms(6), b in atoms(6), s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let (mu, nu) = (measure(&a), measure(&b));
        let map = |z: f64| s * z + (1.0 - s) * t;
        let d = wk_distance(&mu.pushforward(map).unwrap(), &nu.pushforward(map).unwrap());
        prop_assert!(d <= wk_distance(&mu, &nu) + 1e-9);
    }

    #[test]
    fn finite_space_norm_agrees_with_interval_embedding(w in prop::collection::vec(-1.0..=1.0f64, 3)) {
        let dist = vec![vec![0.0, 0.3, 1.0], vec![0.3, 0.0, 0.7], vec![1.0, 0.7, 0.0]];
        let finite = FiberSpace::finite(dist).unwrap();
        let mut on_points: Vec<Atom> = w.iter().enumerate().map(|(i, &x)| Atom::new(i as f64, x)).collect();
        let mut on_line: Vec<Atom> = [0.0, 0.3, 1.0].iter().zip(&w).map(|(&p, &x)| Atom::new(p, x)).collect();
        normalize_atoms(&mut on_points);
        normalize_atoms(&mut on_line);
        let a = wk_norm(&finite, &on_points);
        let b = wk_norm(&FiberSpace::unit(), &on_line);
        prop_assert!((a - b).abs() <= 1e-7, "finite {a} interval {b}");
    }

    #[test]
    fn cylinder_metric_is_a_metric(
        u in prop::collection::vec(0..3usize, 6),
        v in prop::collection::vec(0..3usize, 6),
        w in prop::collection::vec(0..3usize, 6),
    ) {
        let d = |a: &[usize], b: &[usize]| d_theta_words(0.5, a, b);
        prop_assert_eq!(d(&u, &v), d(&v, &u));
        prop_assert!(d(&u, &w) <= d(&u, &v) + d(&v, &w) + 1e-15);
        prop_assert!(d(&u, &v) <= 1.0 / (1.0 - 0.5));
        prop_assert_eq!(d(&u, &u), 0.0);
    }

    #[test]
    fn number_syntax_round_trips(p in 1..50i64, q in 1..50i64, e in -12..12i32) {
        prop_assert_eq!(parse_number(&format!("{p}/{q}")).unwrap(), p as f64 / q as f64);
        prop_assert_eq!(parse_number(&format!("2^{e}")).unwrap(), 2f64.powi(e));
        let x = p as f64 / q as f64;
        prop_assert_eq!(parse_number(&format!("{x:?}")).unwrap(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transfer_preserves_mass_and_intertwines_densities(seed in any::<u64>(), which in 0..5usize, depth in 2..6usize) {
        let (_, sys) = catalog::all().swap_remove(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = LeafwiseMeasure::random_signed(sys.spec().clone(), sys.space().clone(), depth, 3, &mut rng).unwrap();
        let next = transfer_step(&sys, &mu, 0.0).unwrap();
        prop_assert!((next.global_mass() - mu.global_mass()).abs() <= 1e-12);
        let expected = perron_frobenius(sys.spec(), &mu.density()).unwrap();
        let got = next.density();
        prop_assert_eq!(got.values.len(), expected.values.len());
        for (a, b) in got.values.iter().zip(&expected.values) {
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn transfer_does_not_expand_the_weak_norm_of_positive_families(which in 0..5usize, depth in 2..6usize) {
        let (_, sys) = catalog::all().swap_remove(which);
        let start = match sys.space().as_ref() {
            FiberSpace::Interval { lo, .. } => *lo,
            FiberSpace::Finite { .. } => 0.0,
        };
        let nu = FiniteSignedMeasure::dirac(sys.space().clone(), start).unwrap();
        let mu = LeafwiseMeasure::product(sys.spec().clone(), &nu, depth).unwrap();
        let next = transfer_step(&sys, &mu, 0.0).unwrap();
        prop_assert!((weak_norm(&next) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn perron_frobenius_preserves_integrals(seed in any::<u64>(), which in 0..5usize, depth in 2..7usize) {
        let (_, sys) = catalog::all().swap_remove(which);
        let spec = sys.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_lipschitz_function(spec, depth, &mut rng).unwrap();
        let shift = rand::Rng::gen_range(&mut rng, -2.0..2.0);
        let phi = CylinderFunction::new(spec, depth, phi.values.iter().map(|v| v + shift).collect()).unwrap();
        let image = perron_frobenius(spec, &phi).unwrap();
        prop_assert!((image.integrate(spec) - phi.integrate(spec)).abs() <= 1e-12);
    }

    #[test]
    fn markov_masses_sum_to_one(which in 0..5usize, depth in 1..8usize) {
        let (_, sys) = catalog::all().swap_remove(which);
        let spec = sys.spec();
        let table = WordTable::new(spec, depth).unwrap();
        let total: f64 = table.iter().map(|w| spec.mass_of(&w)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for (i, w) in table.iter().enumerate() {
            prop_assert_eq!(table.rank(&w), Some(i));
        }
    }

    #[test]
    fn transfer_is_deterministic(seed in any::<u64>(), which in 0..5usize) {
        let (_, sys) = catalog::all().swap_remove(which);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = LeafwiseMeasure::random_signed(sys.spec().clone(), sys.space().clone(), 6, 4, &mut rng).unwrap();
        let a = transfer_step(&sys, &mu, 2f64.powi(-8)).unwrap();
        let b = transfer_step(&sys, &mu, 2f64.powi(-8)).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}
