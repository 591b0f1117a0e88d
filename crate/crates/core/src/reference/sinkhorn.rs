//! Plain (non-stabilized) Sinkhorn scaling, the entropic baseline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Marginal, OtError};
use crate::matrix::Matrix;
use crate::problem::{
    residual_report, DualCertificate, ResidualReport, SolveResult, SolveStatus, SolveTrace,
    TraceRecord, TransportPlan, TransportProblem,
};
use crate::real::{cast_vec, Precision, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    /// Entropic regularization strength.
    pub eta: f64,
    /// Bound on `||u (K v) - p|| + ||v (K^T u) - q||`.
    pub tol: f64,
    pub max_iters: usize,
    /// The marginal error costs a full matrix pass, so it is only checked
    /// every this many iterations.
    pub check_every: usize,
    pub precision: Precision,
    pub record_trace: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            eta: 1e-2,
            tol: 1e-6,
            max_iters: 10_000,
            check_every: 10,
            precision: Precision::F64,
            record_trace: false,
        }
    }
}

pub fn sinkhorn_solve(problem: &TransportProblem, config: &SinkhornConfig) -> Result<SolveResult, OtError> {
    match config.precision {
        Precision::F64 => sinkhorn_typed::<f64>(problem, config),
        Precision::F32 => sinkhorn_typed::<f32>(problem, config),
    }
}

fn sinkhorn_typed<T: Real>(problem: &TransportProblem, config: &SinkhornConfig) -> Result<SolveResult, OtError> {
    let started = Instant::now();
    if !(config.eta > 0.0) {
        return Err(OtError::InvalidConfig(format!("eta must be positive, got {}", config.eta)));
    }
    if config.check_every == 0 || config.max_iters == 0 {
        return Err(OtError::InvalidConfig("check_every and max_iters must be positive".into()));
    }
    for (which, v) in [(Marginal::Source, problem.p()), (Marginal::Target, problem.q())] {
        if let Some(index) = v.iter().position(|&x| x <= 0.0) {
            return Err(OtError::ZeroMarginal { which, index });
        }
    }
    let (m, n) = (problem.m(), problem.n());
    let p: Vec<T> = cast_vec(problem.p());
    let q: Vec<T> = cast_vec(problem.q());
    let neg_inv_eta = T::from_f64(-1.0 / config.eta);
    let kernel: Matrix<T> = problem.cost().cast::<T>().map(|c| (c * neg_inv_eta).exp());

    let mut u = vec![T::one(); m];
    let mut v = vec![T::one(); n];
    let mut trace = SolveTrace::default();
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let healthy = |x: &[T]| x.iter().all(|&t| t.is_finite() && t > T::zero());

    if kernel.as_slice().iter().all(|&k| k == T::zero()) {
        status = SolveStatus::NumericalFailure;
    } else {
        for k in 1..=config.max_iters {
            iterations = k;
            let kv = mat_vec(&kernel, &v);
            for i in 0..m {
                u[i] = p[i] / kv[i];
            }
            let ktu = mat_t_vec(&kernel, &u);
            for j in 0..n {
                v[j] = q[j] / ktu[j];
            }
            if !healthy(&u) || !healthy(&v) {
                status = SolveStatus::NumericalFailure;
                break;
            }
            if k % config.check_every == 0 {
                let err = marginal_error(&kernel, &u, &v, &p, &q);
                if !err.is_finite() {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
                if config.record_trace {
                    trace.push(TraceRecord {
                        iteration: k,
                        r_primal: err,
                        r_dual: None,
                        gap: None,
                        objective: None,
                        ergodic_objective: None,
                        fixed_point_residual: None,
                    });
                }
                if err <= config.tol {
                    status = SolveStatus::Converged;
                    break;
                }
            }
        }
    }

    let plan = Matrix::from_fn(m, n, |i, j| (u[i] * kernel.get(i, j) * v[j]).as_f64());
    let (cert, report) = certificate(problem, &plan, &u, &v, config.eta);
    trace.status = Some(status);
    trace.iterations = iterations;
    trace.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(SolveResult { plan: TransportPlan::new(plan), cert, report, trace, status })
}

fn mat_vec<T: Real>(k: &Matrix<T>, v: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); k.rows()];
    for (j, &vj) in v.iter().enumerate() {
        for (o, &kij) in out.iter_mut().zip(k.col(j)) {
            *o = *o + kij * vj;
        }
    }
    out
}

fn mat_t_vec<T: Real>(k: &Matrix<T>, u: &[T]) -> Vec<T> {
    (0..k.cols())
        .map(|j| k.col(j).iter().zip(u).fold(T::zero(), |acc, (&kij, &ui)| acc + kij * ui))
        .collect()
}

fn marginal_error<T: Real>(k: &Matrix<T>, u: &[T], v: &[T], p: &[T], q: &[T]) -> f64 {
    let kv = mat_vec(k, v);
    let ktu = mat_t_vec(k, u);
    let rows: f64 = u.iter().zip(&kv).zip(p).map(|((&a, &b), &c)| (a * b - c).as_f64().powi(2)).sum();
    let cols: f64 = v.iter().zip(&ktu).zip(q).map(|((&a, &b), &c)| (a * b - c).as_f64().powi(2)).sum();
    rows.sqrt() + cols.sqrt()
}

/// Dual potentials `eta ln u`, `eta ln v` when all of them are finite.
fn certificate<T: Real>(
    problem: &TransportProblem,
    plan: &Matrix,
    u: &[T],
    v: &[T],
    eta: f64,
) -> (Option<DualCertificate>, ResidualReport) {
    let mu: Vec<f64> = u.iter().map(|x| eta * x.as_f64().ln()).collect();
    let nu: Vec<f64> = v.iter().map(|x| eta * x.as_f64().ln()).collect();
    let finite = mu.iter().chain(&nu).all(|x| x.is_finite());
    let tp = TransportPlan::new(plan.clone());
    if finite {
        let cert = DualCertificate { mu, nu, rho: eta };
        let report = residual_report(problem, &tp, &cert).expect("shapes agree");
        (Some(cert), report)
    } else {
        let zero = DualCertificate { mu: vec![0.0; problem.m()], nu: vec![0.0; problem.n()], rho: eta };
        let base = residual_report(problem, &tp, &zero).expect("shapes agree");
        (None, ResidualReport { r_dual: None, gap: None, ..base })
    }
}
