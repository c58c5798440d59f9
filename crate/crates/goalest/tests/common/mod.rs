//! Shared helpers for the integration suites.
// Each test target uses a different subset of these helpers.
#![allow(dead_code)]

use std::sync::Arc;

use goalest::mesh::{generate_initial_mesh, Mesh};
use goalest::space::{CoefficientVector, FunctionSpace, Order};

pub fn two_level_spaces(mesh: Arc<Mesh>) -> (FunctionSpace, FunctionSpace) {
    (
        FunctionSpace::new(mesh.clone(), Order::P1),
        FunctionSpace::new(mesh, Order::P2),
    )
}

pub fn initial_spaces() -> (Arc<Mesh>, FunctionSpace, FunctionSpace) {
    let mesh = Arc::new(generate_initial_mesh());
    let (coarse, fine) = two_level_spaces(mesh.clone());
    (mesh, coarse, fine)
}

/// Deterministic xorshift generator in [-1/2, 1/2).
pub fn rng(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// Random coefficient vector respecting the Dirichlet constraint.
pub fn random_state(space: &FunctionSpace, seed: u64) -> CoefficientVector {
    let mut r = rng(seed);
    CoefficientVector {
        values: (0..space.dof_count())
            .map(|d| if space.is_dirichlet(d) { 0.0 } else { r() })
            .collect(),
    }
}

/// Relative difference guarded against a zero reference.
pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}
