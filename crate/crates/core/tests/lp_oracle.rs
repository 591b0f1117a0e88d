mod common;

use drot_core::reference::{lp_exact, lp_exact_with_limit};
use drot_core::{optimality_violations, Matrix, TransportProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Minimum of `<C, X>` over all basic feasible solutions, found by
/// enumerating every set of `m + n - 1` cells.
fn brute_force_optimum(prob: &TransportProblem) -> f64 {
    let (m, n) = (prob.m(), prob.n());
    let cells = m * n;
    let size = m + n - 1;
    let b = DVector::from_iterator(m + n, prob.p().iter().chain(prob.q()).copied());
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let chosen: Vec<usize> = (0..cells).filter(|k| mask & (1 << k) != 0).collect();
        let mut a = DMatrix::<f64>::zeros(m + n, size);
        for (col, &k) in chosen.iter().enumerate() {
            let (i, j) = (k % m, k / m);
            a[(i, col)] = 1.0;
            a[(m + j, col)] = 1.0;
        }
        let svd = a.clone().svd(true, true);
        if svd.rank(1e-10) < size {
            continue;
        }
        let x = svd.solve(&b, 1e-10).unwrap();
        if (&a * &x - &b).amax() > 1e-10 || x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let cost: f64 = chosen.iter().zip(x.iter()).map(|(&k, &v)| prob.cost().as_slice()[k] * v).sum();
        best = best.min(cost);
    }
    best
}

#[test]
fn matches_vertex_enumeration() {
    let mut rng = common::rng(17);
    for (m, n) in [(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3), (3, 4), (4, 3)] {
        for _ in 0..6 {
            let prob = common::random_problem(&mut rng, m, n);
            let sol = lp_exact(&prob).unwrap();
            let brute = brute_force_optimum(&prob);
            assert!((sol.objective - brute).abs() <= 1e-12, "{m}x{n}: {} vs {brute}", sol.objective);
        }
    }
}

#[test]
fn certificates_satisfy_optimality_conditions() {
    let mut rng = common::rng(29);
    for trial in 0..60 {
        let m = rng.random_range(1..=20);
        let n = rng.random_range(1..=20);
        let prob = match trial % 3 {
            0 => common::random_problem(&mut rng, m, n),
            1 => common::gaussian(m, n, trial),
            // integer costs with uniform marginals: heavily degenerate
            _ => {
                let cost = Matrix::from_fn(m, n, |_, _| rng.random_range(0..4) as f64);
                TransportProblem::uniform(cost).unwrap()
            }
        };
        let sol = lp_exact_with_limit(&prob, 400).unwrap();
        let viol = optimality_violations(&prob, &sol.plan, &sol.mu, &sol.nu).unwrap();
        assert!(viol.max() <= 1e-9, "trial {trial} ({m}x{n}): {viol:?}");
        let dual = sol.mu.iter().zip(prob.p()).map(|(a, b)| a * b).sum::<f64>()
            + sol.nu.iter().zip(prob.q()).map(|(a, b)| a * b).sum::<f64>();
        assert!((dual - sol.objective).abs() <= 1e-9);
    }
}

#[test]
fn basic_solution_is_sparse() {
    let mut rng = common::rng(31);
    for _ in 0..10 {
        let prob = common::random_problem(&mut rng, 9, 7);
        let sol = lp_exact(&prob).unwrap();
        let nnz = sol.plan.as_slice().iter().filter(|&&v| v > 0.0).count();
        assert!(nnz <= 9 + 7 - 1);
    }
}
