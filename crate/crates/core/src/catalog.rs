//! Ready-made systems used by the examples, tests and CLI defaults.

use std::sync::Arc;

use crate::fiber::{FiberKind, FiberSystem};
use crate::measure::FiberSpace;
use crate::symbolic::SubshiftSpec;

fn unit() -> Arc<FiberSpace> {
    Arc::new(FiberSpace::unit())
}

/// Full shift on two symbols, uniform weights, `θ = ½`, fiber maps
/// `z/2` and `z/2 + ½`. Its invariant measure is `m × Lebesgue`.
pub fn dyadic() -> FiberSystem {
    let spec = Arc::new(SubshiftSpec::full_shift(2, 0.5).expect("valid spec"));
    FiberSystem::new(
        spec,
        unit(),
        FiberKind::FirstSymbolAffine { a: vec![0.5, 0.5], b: vec![0.0, 0.5] },
        None,
        None,
    )
    .expect("valid system")
}

/// `G(x, z) = z/2 + ¼ Σ x_i 2^{−i}` on the uniform full shift with `θ = ½`.
/// The fiber maps depend on the whole base point, so the disintegration of
/// the invariant measure is not constant.
pub fn sequence_affine() -> FiberSystem {
    let spec = Arc::new(SubshiftSpec::full_shift(2, 0.5).expect("valid spec"));
    FiberSystem::new(spec, unit(), FiberKind::SequenceAffine { a: 0.5, c0: 0.5 }, None, None)
        .expect("valid system")
}

/// Binary IFS `z/2`, `z/2 + ½` driven by i.i.d. symbols with weights
/// `(⅔, ⅓)`.
pub fn skewed_ifs() -> FiberSystem {
    let spec = Arc::new(SubshiftSpec::bernoulli(vec![2.0 / 3.0, 1.0 / 3.0], 0.5).expect("valid spec"));
    FiberSystem::new(
        spec,
        unit(),
        FiberKind::FirstSymbolAffine { a: vec![0.5, 0.5], b: vec![0.0, 0.5] },
        None,
        None,
    )
    .expect("valid system")
}

/// Golden-mean shift (no two consecutive 1s) with middle-thirds Cantor
/// maps `z/3` and `z/3 + ⅔`.
pub fn golden_cantor() -> FiberSystem {
    let spec = Arc::new(
        SubshiftSpec::new(
            vec![vec![1, 1], vec![1, 0]],
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
            None,
            0.5,
        )
        .expect("valid spec"),
    );
    FiberSystem::new(
        spec,
        unit(),
        FiberKind::FirstSymbolAffine {
            a: vec![1.0 / 3.0, 1.0 / 3.0],
            b: vec![0.0, 2.0 / 3.0],
        },
        None,
        None,
    )
    .expect("valid system")
}

/// Three points at `0, 0.3, 1` with two contracting point maps.
pub fn finite_table() -> FiberSystem {
    let spec = Arc::new(SubshiftSpec::full_shift(2, 0.5).expect("valid spec"));
    let space = FiberSpace::finite(vec![
        vec![0.0, 0.3, 1.0],
        vec![0.3, 0.0, 0.7],
        vec![1.0, 0.7, 0.0],
    ])
    .expect("valid space");
    FiberSystem::new(
        spec,
        Arc::new(space),
        FiberKind::Table { maps: vec![vec![0, 0, 1], vec![1, 1, 0]] },
        None,
        None,
    )
    .expect("valid system")
}

/// Name and constructor of every catalog system.
pub fn all() -> Vec<(&'static str, FiberSystem)> {
    vec![
        ("dyadic", dyadic()),
        ("sequence_affine", sequence_affine()),
        ("skewed_ifs", skewed_ifs()),
        ("golden_cantor", golden_cantor()),
        ("finite_table", finite_table()),
    ]
}

pub fn by_name(name: &str) -> Option<FiberSystem> {
    all().into_iter().find(|(n, _)| *n == name).map(|(_, s)| s)
}
