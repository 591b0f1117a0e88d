//! Dispatch from a [`RunConfig`] to the solvers of `drot-core`.

use std::time::Instant;

use drot_core::problem::TraceRecord;
use drot_core::reference::{admm_reference_step, dr_reference_step, sinkhorn_solve, AdmmState, DrReferenceState};
use drot_core::{
    residual_report, DualCertificate, Matrix, OtError, SolveResult, SolveStatus, SolveTrace, TransportPlan,
    TransportProblem,
};

use crate::config::{RunConfig, Solver};

pub fn run_solver(problem: &TransportProblem, config: &RunConfig) -> Result<SolveResult, OtError> {
    match config.solver {
        Solver::Drot | Solver::DrotFused => drot_core::solve(problem, &config.drot_config(), None),
        Solver::Sinkhorn => sinkhorn_solve(problem, &config.sinkhorn_config()),
        Solver::DrReference => splitting_solve(problem, config, Splitting::Dr),
        Solver::AdmmReference => splitting_solve(problem, config, Splitting::Admm),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Splitting {
    Dr,
    Admm,
}

/// Splits `D_ij = mu_i + nu_j` into its two factors.
///
/// The split is unique up to a constant moved between `mu` and `nu`; this
/// picks the one with equal means.
pub fn split_rank_two(d: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = d.shape();
    let row_means: Vec<f64> = d.row_sums().into_iter().map(|s| s / n as f64).collect();
    let col_means: Vec<f64> = d.col_sums().into_iter().map(|s| s / m as f64).collect();
    let half_mean = row_means.iter().sum::<f64>() / m as f64 / 2.0;
    (
        row_means.iter().map(|v| v - half_mean).collect(),
        col_means.iter().map(|v| v - half_mean).collect(),
    )
}

/// Three-matrix Douglas-Rachford or ADMM from `X_0 = p q^T`.
///
/// The dual estimate is the scaled projection correction of the latest
/// coupling step, which has the form `rho (mu e^T + f nu^T)`.
fn splitting_solve(problem: &TransportProblem, config: &RunConfig, kind: Splitting) -> Result<SolveResult, OtError> {
    let started = Instant::now();
    let drot = config.drot_config();
    let rho = drot.rho(problem.m(), problem.n())?;
    let tol = drot.tolerances;
    let x0 = Matrix::outer(problem.p(), problem.q());
    let mut dr = DrReferenceState::new(x0.clone());
    let mut admm = AdmmState { x: x0.clone(), z: x0, w: Matrix::zeros(problem.m(), problem.n()) };
    let mut trace = SolveTrace::default();
    let mut status = SolveStatus::MaxIters;
    let mut last = None;
    let mut k = 0;
    while k < drot.max_iters {
        let stepped = match kind {
            Splitting::Dr => {
                let y_prev = dr.y.clone();
                dr_reference_step(&mut dr, problem, rho).map(|()| {
                    let fp = dr.y.distance(&y_prev);
                    (dr.x.clone(), dr.y.axpby(1.0 / rho, &dr.x, -1.0 / rho), Some(fp))
                })
            }
            Splitting::Admm => {
                let shifted = admm.x.axpby(1.0, &admm.w, rho);
                admm_reference_step(&mut admm, problem, rho)
                    .map(|()| (admm.x.clone(), admm.z.axpby(1.0 / rho, &shifted, -1.0 / rho), None))
            }
        };
        k += 1;
        let (plan, d, fixed_point_residual) = match stepped {
            Ok(v) => v,
            Err(OtError::NonFiniteIterate { .. }) => {
                status = SolveStatus::NumericalFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        if !plan.all_finite() || !d.all_finite() {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if k % drot.check_every != 0 && k < drot.max_iters {
            last = Some((plan, d));
            continue;
        }
        let (mu, nu) = split_rank_two(&d);
        let cert = DualCertificate { mu, nu, rho };
        let report = residual_report(problem, &TransportPlan::new(plan.clone()), &cert)?;
        if drot.record_trace {
            trace.push(TraceRecord {
                iteration: k,
                r_primal: report.r_primal,
                r_dual: report.r_dual,
                gap: report.gap,
                objective: Some(report.objective),
                ergodic_objective: None,
                fixed_point_residual,
            });
        }
        let done = tol.satisfied_by(&report, problem.p(), problem.q());
        last = Some((plan, d));
        if done {
            status = SolveStatus::Converged;
            break;
        }
    }
    let (plan, d) = last.unwrap_or_else(|| {
        let x = Matrix::outer(problem.p(), problem.q());
        (x, Matrix::zeros(problem.m(), problem.n()))
    });
    let (mu, nu) = split_rank_two(&d);
    let cert = DualCertificate { mu, nu, rho };
    let plan = TransportPlan::new(plan);
    let report = residual_report(problem, &plan, &cert)?;
    trace.status = Some(status);
    trace.iterations = k;
    trace.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(SolveResult { plan, cert: Some(cert), report, trace, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Stopping;

    fn swap() -> TransportProblem {
        let cost = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        TransportProblem::new(cost, vec![0.7, 0.3], vec![0.4, 0.6]).unwrap()
    }

    #[test]
    fn rank_two_split_examples() {
        let d = Matrix::from_fn(3, 2, |i, j| [1.0, -2.0, 0.5][i] + [3.0, 0.25][j]);
        let (mu, nu) = split_rank_two(&d);
        for i in 0..3 {
            for j in 0..2 {
                assert!((mu[i] + nu[j] - d.get(i, j)).abs() < 1e-14);
            }
        }
        let mean_mu = mu.iter().sum::<f64>() / 3.0;
        let mean_nu = nu.iter().sum::<f64>() / 2.0;
        assert!((mean_mu - mean_nu).abs() < 1e-14);
    }

    #[test]
    fn every_solver_finds_swap_optimum() {
        for solver in [Solver::Drot, Solver::DrotFused, Solver::DrReference, Solver::AdmmReference] {
            let config = RunConfig { solver, tol_primal: Some(1e-9), tol_dual: Some(1e-9), tol_gap: Some(1e-9), ..RunConfig::default() };
            let res = run_solver(&swap(), &config).unwrap();
            assert_eq!(res.status, SolveStatus::Converged, "{solver:?}");
            assert!((res.report.objective - 0.3).abs() < 1e-8, "{solver:?}: {}", res.report.objective);
            assert!(res.report.gap.unwrap() <= 1e-9);
        }
    }

    #[test]
    fn sinkhorn_dispatch() {
        let config = RunConfig { solver: Solver::Sinkhorn, eta: Some(0.05), ..RunConfig::default() };
        let res = run_solver(&swap(), &config).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!((res.report.objective - 0.3).abs() < 1e-5);
    }

    #[test]
    fn primal_only_reference_stops_early() {
        let config = RunConfig {
            solver: Solver::DrReference,
            stopping: Stopping::Primal,
            tol_primal: Some(1e-3),
            trace: true,
            ..RunConfig::default()
        };
        let res = run_solver(&swap(), &config).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(res.report.r_primal <= 1e-3);
        assert_eq!(res.trace.records.len(), res.trace.iterations);
    }

    #[test]
    fn iteration_cap_reports_max_iters() {
        let config = RunConfig { solver: Solver::AdmmReference, max_iters: Some(3), check_every: Some(2), ..RunConfig::default() };
        let res = run_solver(&swap(), &config).unwrap();
        assert_eq!(res.status, SolveStatus::MaxIters);
        assert_eq!(res.trace.iterations, 3);
    }
}
