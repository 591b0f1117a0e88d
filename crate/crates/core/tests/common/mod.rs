#![allow(dead_code)]

use drot_core::probgen::{gen_gaussian_problem, GaussianSpec, MarginalKind};
use drot_core::{Matrix, TransportProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(m: usize, n: usize, seed: u64) -> TransportProblem {
    gen_gaussian_problem(&GaussianSpec::new(m, n, seed)).unwrap()
}

pub fn gaussian_dirichlet(m: usize, n: usize, seed: u64) -> TransportProblem {
    let spec = GaussianSpec { marginals: MarginalKind::Dirichlet { alpha: 1.0 }, ..GaussianSpec::new(m, n, seed) };
    gen_gaussian_problem(&spec).unwrap()
}

pub fn uniform_matrix(rng: &mut ChaCha20Rng, m: usize, n: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(m, n, |_, _| rng.random_range(lo..hi))
}

pub fn simplex(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Random instance with continuous cost in `[0, 1)` and random marginals.
pub fn random_problem(rng: &mut ChaCha20Rng, m: usize, n: usize) -> TransportProblem {
    let cost = uniform_matrix(rng, m, n, 0.0, 1.0);
    let p = simplex(rng, m);
    let q = simplex(rng, n);
    TransportProblem::new_renormalized(cost, p, q).unwrap()
}
