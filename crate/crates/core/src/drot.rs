//! Douglas-Rachford splitting for optimal transport with a single plan array.
//!
//! The splitting alternates the clamp `[Y - rho C]_+` with the projection
//! onto the coupling set. Eliminating `Z` and `Y` leaves one matrix and a
//! handful of vectors:
//!
//! ```text
//! X+    = [X + phi e^T + f varphi^T - rho C]_+
//! r, s  = X+ e - p, X+^T f - q,          beta = f^T r / (m + n)
//! phi   = (a - 2r + (2 beta - alpha) f) / n
//! varphi= (b - 2s + (2 beta - alpha) e) / m
//! a, b, alpha <- a - r, b - s, alpha - beta
//! ```
//!
//! `phi / rho` and `varphi / rho` converge to optimal dual potentials, so the
//! primal residual, dual residual and duality gap can be monitored for free.

use std::borrow::Cow;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::OtError;
use crate::fused::{FusedEngine, MemoryTraffic, PassMode, Reductions, TileConfig};
use crate::matrix::Matrix;
use crate::problem::{
    residual_report, DualCertificate, ResidualReport, SolveResult, SolveStatus, SolveTrace,
    Tolerances, TraceRecord, TransportPlan, TransportProblem,
};
use crate::real::{cast_vec, Precision, Real};

/// Which implementation executes the matrix work of a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Separate sweeps for the clamp, the sums and the rank-two overwrite.
    Reference,
    /// One tiled pass per iteration.
    #[default]
    Fused,
    /// One tiled pass per iteration, reading `C` only every other iteration.
    FusedSkipCost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrotConfig {
    /// `rho = rho0 / (m + n)` unless `rho_override` is set.
    pub rho0: f64,
    pub rho_override: Option<f64>,
    pub tolerances: Tolerances,
    pub max_iters: usize,
    /// Evaluate the stopping test every this many iterations.
    pub check_every: usize,
    pub deterministic: bool,
    pub precision: Precision,
    pub engine: Engine,
    pub tiling: TileConfig,
    /// Keep a trace record at every stopping check.
    pub record_trace: bool,
}

impl Default for DrotConfig {
    fn default() -> Self {
        Self {
            rho0: 2.0,
            rho_override: None,
            tolerances: Tolerances::uniform(1e-6),
            max_iters: 100_000,
            check_every: 1,
            deterministic: true,
            precision: Precision::F64,
            engine: Engine::Fused,
            tiling: TileConfig::default(),
            record_trace: true,
        }
    }
}

impl DrotConfig {
    /// The `rho0 = 1 / ln(m)` preset that shortens the all-zero warm-up on
    /// large problems started from `p q^T`.
    pub fn log_rho0_preset(m: usize) -> Self {
        let rho0 = if m > 2 { 1.0 / (m as f64).ln() } else { 1.0 };
        Self { rho0, ..Self::default() }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerances = Tolerances { mode: self.tolerances.mode, ..Tolerances::uniform(tol) };
        self
    }

    /// Penalty parameter for an `m x n` instance.
    pub fn rho(&self, m: usize, n: usize) -> Result<f64, OtError> {
        let rho = match self.rho_override {
            Some(r) => r,
            None => self.rho0 / (m + n) as f64,
        };
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(OtError::NonPositiveRho(rho));
        }
        Ok(rho)
    }

    fn validate(&self) -> Result<(), OtError> {
        if self.max_iters == 0 {
            return Err(OtError::InvalidConfig("max_iters must be positive".into()));
        }
        if self.check_every == 0 {
            return Err(OtError::InvalidConfig("check_every must be positive".into()));
        }
        let t = &self.tolerances;
        if [t.primal, t.dual, t.gap].iter().any(|v| !(*v >= 0.0)) {
            return Err(OtError::InvalidConfig("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// What the plan array currently stores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArrayContent {
    /// `X_k`; the pending rank-two term is applied on the next pass.
    Plan,
    /// `Y_k = X_k + phi_k e^T + f varphi_k^T` (reference engine).
    Iterate,
    /// `X_k - rho C` (skip-cost engine, odd iterations).
    PlanMinusCost,
}

/// The single plan array and the vector recursion state.
#[derive(Clone, Debug)]
pub struct DrotState<T: Real = f64> {
    pub xy: Matrix<T>,
    pub content: ArrayContent,
    pub phi: Vec<T>,
    pub varphi: Vec<T>,
    /// `Y_k e - p`
    pub a: Vec<T>,
    /// `Y_k^T f - q`
    pub b: Vec<T>,
    pub alpha: T,
    /// `X_k e - p`
    pub r: Vec<T>,
    /// `X_k^T f - q`
    pub s: Vec<T>,
    pub beta: T,
    pub k: usize,
    pub rho: T,
}

impl<T: Real> DrotState<T> {
    pub fn cost_folded(&self) -> bool {
        self.content == ArrayContent::PlanMinusCost
    }

    /// `sqrt(||r||^2 + ||s||^2)` for the current plan.
    pub fn primal_residual(&self) -> f64 {
        let sq = |v: &[T]| v.iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>();
        (sq(&self.r) + sq(&self.s)).sqrt()
    }
}

/// Initial state: `phi = varphi = 0`, `a = X0 e - p`, `b = X0^T f - q`.
/// `x0` defaults to `p q^T`.
pub fn init_state<T: Real>(
    problem: &TransportProblem,
    config: &DrotConfig,
    x0: Option<&Matrix>,
) -> Result<DrotState<T>, OtError> {
    let (m, n) = (problem.m(), problem.n());
    let rho = config.rho(m, n)?;
    let x0 = match x0 {
        Some(x) => {
            x.check_shape(m, n)?;
            for j in 0..n {
                for (i, &v) in x.col(j).iter().enumerate() {
                    if !v.is_finite() {
                        return Err(OtError::NonFiniteEntry { what: "initial plan" });
                    }
                    if v < 0.0 {
                        return Err(OtError::InvalidInitialPlan { row: i, col: j });
                    }
                }
            }
            x.cast::<T>()
        }
        None => Matrix::outer(&cast_vec::<T>(problem.p()), &cast_vec::<T>(problem.q())),
    };
    let p: Vec<T> = cast_vec(problem.p());
    let q: Vec<T> = cast_vec(problem.q());
    let a: Vec<T> = x0.row_sums().iter().zip(&p).map(|(&s, &p)| s - p).collect();
    let b: Vec<T> = x0.col_sums().iter().zip(&q).map(|(&s, &q)| s - q).collect();
    let alpha = a.iter().copied().sum::<T>() / T::from_usize(m + n);
    let content = match config.engine {
        Engine::Reference => ArrayContent::Iterate,
        Engine::Fused | Engine::FusedSkipCost => ArrayContent::Plan,
    };
    Ok(DrotState {
        xy: x0,
        content,
        phi: vec![T::zero(); m],
        varphi: vec![T::zero(); n],
        r: a.clone(),
        s: b.clone(),
        beta: alpha,
        a,
        b,
        alpha,
        k: 0,
        rho: T::from_f64(rho),
    })
}

/// `mu = phi / rho`, `nu = varphi / rho`.
pub fn recover_duals<T: Real>(state: &DrotState<T>, rho: f64) -> DualCertificate {
    DualCertificate {
        mu: state.phi.iter().map(|v| v.as_f64() / rho).collect(),
        nu: state.varphi.iter().map(|v| v.as_f64() / rho).collect(),
        rho,
    }
}

/// Running mean of `<C, X_i>` for the ergodic iterate, without forming it.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErgodicAverage {
    avg: f64,
    count: usize,
}

impl ErgodicAverage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds in the next objective value and returns the updated mean.
    pub fn push(&mut self, value: f64) -> f64 {
        self.count += 1;
        self.avg += (value - self.avg) / self.count as f64;
        self.avg
    }

    pub fn value(&self) -> Option<f64> {
        (self.count > 0).then_some(self.avg)
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Quantities produced by one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    /// Index `k + 1` of the plan just produced.
    pub iteration: usize,
    /// `sqrt(||r_{k+1}||^2 + ||s_{k+1}||^2)`.
    pub r_primal: f64,
    /// `<C, X_{k+1}>`; `None` on passes that skip `C`.
    pub objective: Option<f64>,
    /// `<C, X_k>` when it was observed during this pass.
    pub prev_objective: Option<f64>,
    /// Dual residual of the duals the pass consumed (`phi_k`, `varphi_k`).
    pub prev_dual_residual: Option<f64>,
    /// `||Y_{k+1} - Y_k||_F`.
    pub fixed_point_residual: Option<f64>,
    /// Element traffic on the plan and cost arrays during this step.
    pub traffic: MemoryTraffic,
}

/// A DROT run in progress.
pub struct Drot<'a, T: Real = f64> {
    problem: &'a TransportProblem,
    cost: Cow<'a, Matrix<T>>,
    p: Vec<T>,
    q: Vec<T>,
    engine: Engine,
    fused: Option<FusedEngine>,
    /// Reference engine only: `X_k`, since the array holds `Y_k`.
    plan_copy: Option<Matrix<T>>,
    rho: f64,
    state: DrotState<T>,
}

impl<'a, T: Real> Drot<'a, T> {
    pub fn new(
        problem: &'a TransportProblem,
        config: &DrotConfig,
        x0: Option<&Matrix>,
    ) -> Result<Self, OtError> {
        config.validate()?;
        let state = init_state::<T>(problem, config, x0)?;
        let fused = match config.engine {
            Engine::Reference => None,
            Engine::Fused | Engine::FusedSkipCost => {
                let tiling = TileConfig { deterministic: config.deterministic, ..config.tiling };
                Some(FusedEngine::new(problem.m(), problem.n(), tiling)?)
            }
        };
        let plan_copy = (config.engine == Engine::Reference).then(|| state.xy.clone());
        Ok(Self {
            problem,
            cost: T::view_matrix(problem.cost()),
            p: cast_vec(problem.p()),
            q: cast_vec(problem.q()),
            engine: config.engine,
            fused,
            plan_copy,
            rho: config.rho(problem.m(), problem.n())?,
            state,
        })
    }

    pub fn state(&self) -> &DrotState<T> {
        &self.state
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn iteration(&self) -> usize {
        self.state.k
    }

    /// Executes one full iteration.
    pub fn step(&mut self) -> Result<StepOutput, OtError> {
        self.step_with(Reductions::Full)
    }

    /// Executes one iteration; with [`Reductions::Lean`] the fused engines
    /// leave the residual fields of the output empty.
    pub fn step_with(&mut self, reductions: Reductions) -> Result<StepOutput, OtError> {
        let iteration = self.state.k + 1;
        let out = match self.engine {
            Engine::Reference => self.reference_step(),
            Engine::Fused | Engine::FusedSkipCost => self.fused_step(reductions),
        };
        out.map_err(|e| match e {
            OtError::NonFiniteIterate { .. } => OtError::NonFiniteIterate { iteration },
            other => other,
        })
    }

    fn fused_step(&mut self, reductions: Reductions) -> Result<StepOutput, OtError> {
        let mode = match (self.engine, self.state.content) {
            (Engine::FusedSkipCost, ArrayContent::Plan) => PassMode::FoldWrite,
            (Engine::FusedSkipCost, ArrayContent::PlanMinusCost) => PassMode::FoldRead,
            (_, ArrayContent::Plan) => PassMode::Plain,
            (_, content) => {
                return Err(OtError::InvalidConfig(format!("fused step on array holding {content:?}")))
            }
        };
        let engine = self.fused.as_ref().expect("fused engine present");
        let st = &mut self.state;
        let out = engine.pass_with(&mut st.xy, &self.cost, &st.phi, &st.varphi, st.rho, mode, reductions)?;
        st.content = match mode {
            PassMode::FoldWrite => ArrayContent::PlanMinusCost,
            PassMode::Plain | PassMode::FoldRead => ArrayContent::Plan,
        };
        let prev = out.step_sq.map(|_| (st.phi.clone(), st.varphi.clone(), st.r.clone(), st.s.clone()));
        update_vectors(st, &out.row_sums, &out.col_sums, &self.p, &self.q);
        let fixed_point_residual = match (out.step_sq, prev) {
            (Some(d2), Some(prev)) => Some(rank_two_step_norm(st, d2, &prev)),
            _ => None,
        };
        Ok(StepOutput {
            iteration: st.k,
            r_primal: st.primal_residual(),
            objective: out.cost_dot.map(Real::as_f64),
            prev_objective: out.prev_cost_dot.map(Real::as_f64),
            prev_dual_residual: out.dual_residual_sq.map(|d| d.as_f64().max(0.0).sqrt()),
            fixed_point_residual,
            traffic: out.traffic,
        })
    }

    fn reference_step(&mut self) -> Result<StepOutput, OtError> {
        let st = &mut self.state;
        debug_assert_eq!(st.content, ArrayContent::Iterate);
        let y_prev = st.xy.clone();
        let cells = (y_prev.rows() * y_prev.cols()) as u64;
        let zero = T::zero();
        // clamp sweep: X_{k+1} = [Y_k - rho C]_+
        let mut x = st.xy.clone();
        for (v, &c) in x.as_mut_slice().iter_mut().zip(self.cost.as_slice()) {
            let t = *v - st.rho * c;
            *v = if t > zero { t } else { zero };
        }
        if !x.all_finite() || !y_prev.all_finite() {
            return Err(OtError::NonFiniteIterate { iteration: st.k + 1 });
        }
        let rows = x.row_sums();
        let cols = x.col_sums();
        let objective = self.cost.dot(&x).as_f64();
        update_vectors(st, &rows, &cols, &self.p, &self.q);
        // rank-two overwrite: Y_{k+1} = X_{k+1} + phi e^T + f varphi^T
        let mut y = x.clone();
        for j in 0..y.cols() {
            let vphi = st.varphi[j];
            for (v, &ph) in y.col_mut(j).iter_mut().zip(&st.phi) {
                *v = *v + ph + vphi;
            }
        }
        if !y.all_finite() {
            return Err(OtError::NonFiniteIterate { iteration: st.k });
        }
        let fixed_point_residual = y.distance(&y_prev).as_f64();
        st.xy = y;
        self.plan_copy = Some(x);
        Ok(StepOutput {
            iteration: st.k,
            r_primal: st.primal_residual(),
            objective: Some(objective),
            prev_objective: None,
            prev_dual_residual: None,
            fixed_point_residual: Some(fixed_point_residual),
            // clamp, row sums, column sums, dot, overwrite, two-sided distance
            traffic: MemoryTraffic { x_reads: 7 * cells, x_writes: 2 * cells, cost_reads: 2 * cells },
        })
    }

    /// The current plan `X_k` in double precision.
    pub fn plan(&self) -> Matrix {
        match self.state.content {
            ArrayContent::Plan => self.state.xy.cast(),
            ArrayContent::Iterate => self.plan_copy.as_ref().expect("reference plan copy").cast(),
            ArrayContent::PlanMinusCost => {
                let rho = self.state.rho;
                let data = self
                    .state
                    .xy
                    .as_slice()
                    .iter()
                    .zip(self.cost.as_slice())
                    .map(|(&v, &c)| (v + rho * c).as_f64())
                    .collect();
                Matrix::from_col_major(self.problem.m(), self.problem.n(), data)
                    .expect("shape preserved")
            }
        }
    }

    pub fn duals(&self) -> DualCertificate {
        recover_duals(&self.state, self.rho)
    }

    /// Exact residual report for the current `(X_k, phi_k / rho, varphi_k / rho)`.
    pub fn exact_report(&self) -> ResidualReport {
        residual_report(self.problem, &TransportPlan::new(self.plan()), &self.duals())
            .expect("shapes are consistent")
    }
}

/// Vector recursions after a plan update with row sums `u` and column sums `v`.
fn update_vectors<T: Real>(st: &mut DrotState<T>, u: &[T], v: &[T], p: &[T], q: &[T]) {
    let (m, n) = (p.len(), q.len());
    for ((r, &ui), &pi) in st.r.iter_mut().zip(u).zip(p) {
        *r = ui - pi;
    }
    for ((s, &vj), &qj) in st.s.iter_mut().zip(v).zip(q) {
        *s = vj - qj;
    }
    st.beta = st.r.iter().copied().sum::<T>() / T::from_usize(m + n);
    let two = T::from_f64(2.0);
    let shift = two * st.beta - st.alpha;
    let (mf, nf) = (T::from_usize(m), T::from_usize(n));
    for i in 0..m {
        st.phi[i] = (st.a[i] - two * st.r[i] + shift) / nf;
        st.a[i] = st.a[i] - st.r[i];
    }
    for j in 0..n {
        st.varphi[j] = (st.b[j] - two * st.s[j] + shift) / mf;
        st.b[j] = st.b[j] - st.s[j];
    }
    st.alpha = st.alpha - st.beta;
    st.k += 1;
}

/// `||Y_{k+1} - Y_k||_F` from `||X_{k+1} - X_k||^2` and the vector state.
///
/// With `Y_k = X_k + phi_k e^T + f varphi_k^T` the step is
/// `D + dphi e^T + f dvarphi^T` where `D = X_{k+1} - X_k`,
/// `D e = r_{k+1} - r_k` and `D^T f = s_{k+1} - s_k`.
fn rank_two_step_norm<T: Real>(st: &DrotState<T>, d_sq: T, prev: &(Vec<T>, Vec<T>, Vec<T>, Vec<T>)) -> f64 {
    let (phi0, varphi0, r0, s0) = prev;
    let (m, n) = (st.phi.len() as f64, st.varphi.len() as f64);
    let f = |v: T| v.as_f64();
    let dphi: Vec<f64> = st.phi.iter().zip(phi0).map(|(&a, &b)| f(a) - f(b)).collect();
    let dvarphi: Vec<f64> = st.varphi.iter().zip(varphi0).map(|(&a, &b)| f(a) - f(b)).collect();
    let cross_rows: f64 = dphi.iter().zip(&st.r).zip(r0).map(|((u, &r), &r0)| u * (f(r) - f(r0))).sum();
    let cross_cols: f64 = dvarphi.iter().zip(&st.s).zip(s0).map(|((v, &s), &s0)| v * (f(s) - f(s0))).sum();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let total = f(d_sq)
        + 2.0 * (cross_rows + cross_cols)
        + n * sq(&dphi)
        + m * sq(&dvarphi)
        + 2.0 * dphi.iter().sum::<f64>() * dvarphi.iter().sum::<f64>();
    total.max(0.0).sqrt()
}

/// Runs DROT until the stopping test passes or `max_iters` is reached.
pub fn solve(
    problem: &TransportProblem,
    config: &DrotConfig,
    x0: Option<&Matrix>,
) -> Result<SolveResult, OtError> {
    match config.precision {
        Precision::F64 => solve_typed::<f64>(problem, config, x0),
        Precision::F32 => solve_typed::<f32>(problem, config, x0),
    }
}

pub fn solve_typed<T: Real>(
    problem: &TransportProblem,
    config: &DrotConfig,
    x0: Option<&Matrix>,
) -> Result<SolveResult, OtError> {
    let started = Instant::now();
    let mut drot = Drot::<T>::new(problem, config, x0)?;
    let tol = config.tolerances;
    let (p, q) = (problem.p(), problem.q());
    let mut trace = SolveTrace::default();
    let mut ergodic = ErgodicAverage::new();
    let mut objective_pending = false;
    let mut status = SolveStatus::MaxIters;
    let mut failure = None;

    while drot.iteration() < config.max_iters {
        let lean = config.engine == Engine::Fused && (drot.iteration() + 1) % config.check_every != 0;
        let out = match drot.step_with(if lean { Reductions::Lean } else { Reductions::Full }) {
            Ok(out) => out,
            Err(OtError::NonFiniteIterate { iteration }) => {
                status = SolveStatus::NumericalFailure;
                failure = Some(iteration);
                break;
            }
            Err(e) => return Err(e),
        };
        if objective_pending {
            if let Some(prev) = out.prev_objective {
                ergodic.push(prev);
            }
        }
        match out.objective {
            Some(obj) => {
                ergodic.push(obj);
                objective_pending = false;
            }
            None => objective_pending = true,
        }

        // Stopping is only evaluated on passes that read C, where the
        // objective is fresh.
        let Some(objective) = out.objective else { continue };
        if out.iteration % config.check_every != 0 {
            continue;
        }
        let report = match config.engine {
            Engine::Reference => drot.exact_report(),
            Engine::Fused | Engine::FusedSkipCost => {
                // the dual residual refers to the duals the pass consumed
                let dual_obj = drot.duals().dual_objective(p, q);
                ResidualReport {
                    r_primal: out.r_primal,
                    r_dual: out.prev_dual_residual,
                    gap: Some((objective - dual_obj).abs()),
                    objective,
                }
            }
        };
        if config.record_trace {
            trace.push(TraceRecord {
                iteration: out.iteration,
                r_primal: report.r_primal,
                r_dual: report.r_dual,
                gap: report.gap,
                objective: Some(objective),
                ergodic_objective: ergodic.value(),
                fixed_point_residual: out.fixed_point_residual,
            });
        }
        if tol.satisfied_by(&report, p, q) {
            let confirmed = match config.engine {
                Engine::Reference => true,
                _ => tol.satisfied_by(&drot.exact_report(), p, q),
            };
            if confirmed {
                status = SolveStatus::Converged;
                break;
            }
        }
    }

    let plan = drot.plan();
    let cert = drot.duals();
    let report = residual_report(problem, &TransportPlan::new(plan.clone()), &cert)?;
    trace.status = Some(status);
    trace.iterations = failure.unwrap_or(drot.iteration());
    trace.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(SolveResult { plan: TransportPlan::new(plan), cert: Some(cert), report, trace, status })
}
