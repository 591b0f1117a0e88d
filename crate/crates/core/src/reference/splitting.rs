//! The textbook three-matrix Douglas-Rachford iteration and its ADMM form.

use crate::error::OtError;
use crate::matrix::Matrix;
use crate::problem::TransportProblem;
use crate::splitting::{project_coupling, prox_nonneg_linear};

/// Iterates of the three-matrix splitting.
#[derive(Clone, Debug, PartialEq)]
pub struct DrReferenceState {
    pub x: Matrix,
    pub y: Matrix,
    pub z: Matrix,
}

impl DrReferenceState {
    /// Starts from `Y_0 = y0`; `x` and `z` hold `y0` until the first step.
    pub fn new(y0: Matrix) -> Self {
        Self { x: y0.clone(), z: y0.clone(), y: y0 }
    }
}

/// `X+ = [Y - rho C]_+`, `Z+ = P(2X+ - Y)`, `Y+ = Y + Z+ - X+`.
pub fn dr_reference_step(
    state: &mut DrReferenceState,
    problem: &TransportProblem,
    rho: f64,
) -> Result<(), OtError> {
    state.y.check_shape(problem.m(), problem.n())?;
    let x = prox_nonneg_linear(&state.y, problem.cost(), rho)?;
    let reflected = x.axpby(2.0, &state.y, -1.0);
    let z = project_coupling(&reflected, problem.p(), problem.q())?;
    let y = Matrix::from_fn(x.rows(), x.cols(), |i, j| state.y.get(i, j) + z.get(i, j) - x.get(i, j));
    if !y.all_finite() {
        return Err(OtError::NonFiniteIterate { iteration: 0 });
    }
    *state = DrReferenceState { x, y, z };
    Ok(())
}

/// Iterates of ADMM on `min f(x) + g(z)` subject to `x = z`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub x: Matrix,
    pub z: Matrix,
    /// Scaled multiplier of the consensus constraint.
    pub w: Matrix,
}

/// `z+ = P(x + rho w)`, `x+ = [z+ - rho w - rho C]_+`, `w+ = w + (x+ - z+) / rho`.
///
/// With `w_k = (X_k - Y_{k-1}) / rho` this reproduces the Douglas-Rachford
/// plan sequence shifted by one index.
pub fn admm_reference_step(
    state: &mut AdmmState,
    problem: &TransportProblem,
    rho: f64,
) -> Result<(), OtError> {
    if !(rho > 0.0) {
        return Err(OtError::NonPositiveRho(rho));
    }
    state.x.check_shape(problem.m(), problem.n())?;
    state.w.check_shape(problem.m(), problem.n())?;
    let z = project_coupling(&state.x.axpby(1.0, &state.w, rho), problem.p(), problem.q())?;
    let x = prox_nonneg_linear(&z.axpby(1.0, &state.w, -rho), problem.cost(), rho)?;
    let w = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        state.w.get(i, j) + (x.get(i, j) - z.get(i, j)) / rho
    });
    if !w.all_finite() {
        return Err(OtError::NonFiniteIterate { iteration: 0 });
    }
    *state = AdmmState { x, z, w };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_cost(p: &[f64], q: &[f64]) -> TransportProblem {
        TransportProblem::new(Matrix::zeros(p.len(), q.len()), p.to_vec(), q.to_vec()).unwrap()
    }

    #[test]
    fn dr_zero_cost_fixed_point() {
        let (p, q) = ([0.7, 0.3], [0.4, 0.6]);
        let prob = zero_cost(&p, &q);
        let y0 = Matrix::outer(&p, &q);
        let mut st = DrReferenceState::new(y0.clone());
        dr_reference_step(&mut st, &prob, 0.5).unwrap();
        for m in [&st.x, &st.y, &st.z] {
            assert!(m.max_abs_diff(&y0) <= 1e-15);
        }
    }

    #[test]
    fn dr_update_identity() {
        let cost = Matrix::from_rows(&[[0.0, 1.0, 0.3], [1.0, 0.0, 0.6]]);
        let prob = TransportProblem::new(cost, vec![0.6, 0.4], vec![0.2, 0.5, 0.3]).unwrap();
        let y0 = Matrix::outer(prob.p(), prob.q());
        let mut st = DrReferenceState::new(y0.clone());
        dr_reference_step(&mut st, &prob, 0.4).unwrap();
        let dy = st.y.axpby(1.0, &y0, -1.0);
        let dzx = st.z.axpby(1.0, &st.x, -1.0);
        assert!(dy.max_abs_diff(&dzx) <= 1e-16);
    }

    #[test]
    fn admm_zero_cost_fixed_point() {
        let (p, q) = ([0.5, 0.5], [0.25, 0.75]);
        let prob = zero_cost(&p, &q);
        let x0 = Matrix::outer(&p, &q);
        let mut st = AdmmState { x: x0.clone(), z: x0.clone(), w: Matrix::zeros(2, 2) };
        admm_reference_step(&mut st, &prob, 0.3).unwrap();
        assert!(st.x.max_abs_diff(&x0) <= 1e-16);
        assert!(st.w.max_abs() <= 1e-15);
    }

    #[test]
    fn admm_rejects_nonpositive_rho() {
        let prob = zero_cost(&[1.0], &[1.0]);
        let one = Matrix::filled(1, 1, 1.0);
        let mut st = AdmmState { x: one.clone(), z: one, w: Matrix::zeros(1, 1) };
        assert!(matches!(admm_reference_step(&mut st, &prob, -1e-9), Err(OtError::NonPositiveRho(_))));
        assert!(matches!(admm_reference_step(&mut st, &prob, 0.0), Err(OtError::NonPositiveRho(_))));
    }
}
