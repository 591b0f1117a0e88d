mod common;

use drot_core::reference::{dr_reference_step, DrReferenceState};
use drot_core::splitting::{project_coupling, project_range, prox_nonneg_linear, CouplingProjectionScratch};
use drot_core::{Matrix, TransportProblem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(m: usize, n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(lo..hi, m * n).prop_map(move |v| Matrix::from_col_major(m, n, v).unwrap())
}

fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05f64..1.0, len).prop_map(|v| {
        let t: f64 = v.iter().sum();
        v.iter().map(|x| x / t).collect()
    })
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..7, 1usize..7)
}

#[derive(Debug)]
struct Case {
    x: Matrix,
    y: Matrix,
    cost: Matrix,
    p: Vec<f64>,
    q: Vec<f64>,
}

fn case() -> impl Strategy<Value = Case> {
    dims().prop_flat_map(|(m, n)| {
        (matrix(m, n, -2.0, 2.0), matrix(m, n, -2.0, 2.0), matrix(m, n, 0.0, 1.0), simplex(m), simplex(n))
            .prop_map(|(x, y, cost, p, q)| Case { x, y, cost, p, q })
    })
}

fn dr_operator(y: &Matrix, prob: &TransportProblem, rho: f64) -> Matrix {
    let mut st = DrReferenceState::new(y.clone());
    dr_reference_step(&mut st, prob, rho).unwrap();
    st.y
}

/// `min ||Z - X||` subject to the marginal constraints, via the normal equations.
fn kkt_projection(x: &Matrix, p: &[f64], q: &[f64]) -> Matrix {
    let (m, n) = x.shape();
    let mut a = DMatrix::<f64>::zeros(m + n, m * n);
    for j in 0..n {
        for i in 0..m {
            a[(i, j * m + i)] = 1.0;
            a[(m + j, j * m + i)] = 1.0;
        }
    }
    let xv = DVector::from_column_slice(x.as_slice());
    let b = DVector::from_iterator(m + n, p.iter().chain(q).copied());
    let gram = &a * a.transpose();
    let lambda = gram.pseudo_inverse(1e-12).unwrap() * (&a * &xv - b);
    let z = xv - a.transpose() * lambda;
    Matrix::from_col_major(m, n, z.as_slice().to_vec()).unwrap()
}

#[test]
fn projection_matches_normal_equations() {
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
    let p = [0.5, 0.5];
    let z = project_coupling(&x, &p, &p).unwrap();
    assert!(z.max_abs_diff(&kkt_projection(&x, &p, &p)) <= 1e-10);

    let mut rng = common::rng(11);
    for _ in 0..20 {
        let x = common::uniform_matrix(&mut rng, 4, 3, -1.0, 1.0);
        let p = common::simplex(&mut rng, 4);
        let q = common::simplex(&mut rng, 3);
        let z = project_coupling(&x, &p, &q).unwrap();
        assert!(z.max_abs_diff(&kkt_projection(&x, &p, &q)) <= 1e-10);
    }
}

#[test]
fn prox_matches_scalar_loop() {
    let mut rng = common::rng(3);
    let y = common::uniform_matrix(&mut rng, 4, 4, -1.0, 1.0);
    let c = common::uniform_matrix(&mut rng, 4, 4, 0.0, 1.0);
    let out = prox_nonneg_linear(&y, &c, 0.3).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let v = y.get(i, j) - 0.3 * c.get(i, j);
            assert_eq!(out.get(i, j), if v > 0.0 { v } else { 0.0 });
        }
    }
}

proptest! {
    #[test]
    fn projection_is_feasible_and_idempotent(c in case()) {
        let z = project_coupling(&c.x, &c.p, &c.q).unwrap();
        for (s, p) in z.row_sums().iter().zip(&c.p) {
            prop_assert!((s - p).abs() <= 1e-10);
        }
        for (s, q) in z.col_sums().iter().zip(&c.q) {
            prop_assert!((s - q).abs() <= 1e-10);
        }
        let zz = project_coupling(&z, &c.p, &c.q).unwrap();
        prop_assert!(zz.max_abs_diff(&z) <= 1e-12);
    }

    #[test]
    fn projection_is_affine(c in case(), lambda in 0.0f64..1.0) {
        let mix = c.x.axpby(lambda, &c.y, 1.0 - lambda);
        let lhs = project_coupling(&mix, &c.p, &c.q).unwrap();
        let px = project_coupling(&c.x, &c.p, &c.q).unwrap();
        let py = project_coupling(&c.y, &c.p, &c.q).unwrap();
        prop_assert!(lhs.max_abs_diff(&px.axpby(lambda, &py, 1.0 - lambda)) <= 1e-12);
    }

    #[test]
    fn projections_are_nonexpansive(c in case(), rho in 0.01f64..2.0) {
        let d = c.x.distance(&c.y);
        let px = project_coupling(&c.x, &c.p, &c.q).unwrap();
        let py = project_coupling(&c.y, &c.p, &c.q).unwrap();
        prop_assert!(px.distance(&py) <= d + 1e-12);
        let fx = prox_nonneg_linear(&c.x, &c.cost, rho).unwrap();
        let fy = prox_nonneg_linear(&c.y, &c.cost, rho).unwrap();
        prop_assert!(fx.distance(&fy) <= d + 1e-12);
    }

    #[test]
    fn dr_operator_is_firmly_nonexpansive(c in case(), rho in 0.01f64..2.0) {
        let prob = TransportProblem::new_renormalized(c.cost.clone(), c.p.clone(), c.q.clone()).unwrap();
        let tx = dr_operator(&c.x, &prob, rho);
        let ty = dr_operator(&c.y, &prob, rho);
        let dt = tx.axpby(1.0, &ty, -1.0);
        let dy = c.x.axpby(1.0, &c.y, -1.0);
        prop_assert!(dt.dot(&dy) >= dt.dot(&dt) - 1e-10);
    }

    #[test]
    fn gamma_expressions_agree(c in case()) {
        let s = CouplingProjectionScratch::compute(&c.x, &c.p, &c.q).unwrap();
        prop_assert!((s.gamma - s.gamma_from_cols()).abs() <= 1e-10);
    }

    #[test]
    fn range_projection_balances_mass(
        y in proptest::collection::vec(-5.0f64..5.0, 0..8),
        x in proptest::collection::vec(-5.0f64..5.0, 0..8),
    ) {
        let (y2, x2) = project_range(&y, &x);
        let (sy, sx): (f64, f64) = (y2.iter().sum(), x2.iter().sum());
        if !y.is_empty() || !x.is_empty() {
            prop_assert!((sy - sx).abs() <= 1e-12);
        }
    }
}
