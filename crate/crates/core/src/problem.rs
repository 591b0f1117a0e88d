//! Problem, plan and certificate types shared by every solver, plus the
//! residual and optimality diagnostics used for stopping and verification.

use serde::{Deserialize, Serialize};

use crate::error::{Marginal, OtError};
use crate::matrix::Matrix;

/// Allowed relative deviation of a marginal's sum from one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A discrete optimal transport instance: minimize `<C, X>` over nonnegative
/// `X` with row sums `p` and column sums `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportProblem {
    cost: Matrix,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl TransportProblem {
    /// Validates and wraps an instance. Marginals must already sum to one.
    pub fn new(cost: Matrix, p: Vec<f64>, q: Vec<f64>) -> Result<Self, OtError> {
        validate_problem(cost, p, q, false)
    }

    /// Like [`TransportProblem::new`] but rescales `p` and `q` to unit mass.
    pub fn new_renormalized(cost: Matrix, p: Vec<f64>, q: Vec<f64>) -> Result<Self, OtError> {
        validate_problem(cost, p, q, true)
    }

    /// Instance with uniform marginals `1/m` and `1/n`.
    pub fn uniform(cost: Matrix) -> Result<Self, OtError> {
        let (m, n) = cost.shape();
        if m == 0 || n == 0 {
            return Err(OtError::EmptyDimension { rows: m, cols: n });
        }
        Self::new(cost, vec![1.0 / m as f64; m], vec![1.0 / n as f64; n])
    }

    pub fn cost(&self) -> &Matrix {
        &self.cost
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Number of sources.
    pub fn m(&self) -> usize {
        self.cost.rows()
    }

    /// Number of targets.
    pub fn n(&self) -> usize {
        self.cost.cols()
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>, Vec<f64>) {
        (self.cost, self.p, self.q)
    }
}

/// Checks every instance invariant. With `renormalize`, marginals with a
/// positive finite sum are rescaled instead of rejected.
pub fn validate_problem(
    cost: Matrix,
    mut p: Vec<f64>,
    mut q: Vec<f64>,
    renormalize: bool,
) -> Result<TransportProblem, OtError> {
    let (m, n) = cost.shape();
    if m == 0 || n == 0 {
        return Err(OtError::EmptyDimension { rows: m, cols: n });
    }
    if p.len() != m || q.len() != n {
        return Err(OtError::ShapeMismatch { expected: (m, n), found: (p.len(), q.len()) });
    }
    for j in 0..n {
        for (i, &c) in cost.col(j).iter().enumerate() {
            if !c.is_finite() {
                return Err(OtError::NonFiniteEntry { what: "cost" });
            }
            if c < 0.0 {
                return Err(OtError::NegativeCost { row: i, col: j, value: c });
            }
        }
    }
    check_marginal(&mut p, Marginal::Source, renormalize)?;
    check_marginal(&mut q, Marginal::Target, renormalize)?;
    Ok(TransportProblem { cost, p, q })
}

fn check_marginal(v: &mut [f64], which: Marginal, renormalize: bool) -> Result<(), OtError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(OtError::NonFiniteEntry {
            what: match which {
                Marginal::Source => "p",
                Marginal::Target => "q",
            },
        });
    }
    let sum: f64 = v.iter().sum();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        return Err(OtError::MarginalNotSimplex { which, sum, min });
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        if renormalize && sum > 0.0 {
            v.iter_mut().for_each(|x| *x /= sum);
        } else {
            return Err(OtError::MarginalNotSimplex { which, sum, min });
        }
    }
    Ok(())
}

/// A (candidate) transport plan.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub x: Matrix,
}

impl TransportPlan {
    pub fn new(x: Matrix) -> Self {
        Self { x }
    }

    /// Number of entries strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.x.as_slice().iter().filter(|&&v| v > threshold).count()
    }
}

/// Dual pair `(mu, nu)` recovered under penalty `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub rho: f64,
}

impl DualCertificate {
    /// Dual objective `p^T mu + q^T nu`.
    pub fn dual_objective(&self, p: &[f64], q: &[f64]) -> f64 {
        dot(p, &self.mu) + dot(q, &self.nu)
    }
}

/// The stopping-criterion triple plus the primal objective.
///
/// `r_dual` and `gap` are `None` when the solver has no meaningful dual
/// certificate (entropic solutions whose potentials overflowed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub r_primal: f64,
    pub r_dual: Option<f64>,
    pub gap: Option<f64>,
    pub objective: f64,
}

/// How tolerances are compared against residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceMode {
    #[default]
    Absolute,
    /// `r_primal` is divided by `1 + ||p|| + ||q||` and `gap` by `1 + |objective|`.
    Relative,
}

/// User tolerances for the three stopping residuals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    #[serde(default)]
    pub mode: ToleranceMode,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Self { primal: tol, dual: tol, gap: tol, mode: ToleranceMode::Absolute }
    }

    /// Whether `report` meets all three tolerances. Missing dual fields fail.
    pub fn satisfied_by(&self, report: &ResidualReport, p: &[f64], q: &[f64]) -> bool {
        let (primal_scale, gap_scale) = match self.mode {
            ToleranceMode::Absolute => (1.0, 1.0),
            ToleranceMode::Relative => (
                1.0 + norm2(p) + norm2(q),
                1.0 + report.objective.abs(),
            ),
        };
        let dual_ok = report.r_dual.is_some_and(|d| d <= self.dual);
        let gap_ok = report.gap.is_some_and(|g| g / gap_scale <= self.gap);
        report.r_primal / primal_scale <= self.primal && dual_ok && gap_ok
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::uniform(1e-6)
    }
}

/// `<C, X>`, summed column by column in storage order.
pub fn objective(problem: &TransportProblem, plan: &TransportPlan) -> Result<f64, OtError> {
    plan.x.check_shape(problem.m(), problem.n())?;
    Ok(problem.cost.dot(&plan.x))
}

/// Streaming residual report with the default tile width.
pub fn residual_report(
    problem: &TransportProblem,
    plan: &TransportPlan,
    cert: &DualCertificate,
) -> Result<ResidualReport, OtError> {
    residual_report_tiled(problem, plan, cert, 64)
}

/// Residual report computed over tiles of `tile_cols` columns.
///
/// The slack matrix `mu e^T + f nu^T - C` is never stored; each entry is
/// formed, reduced and dropped. All reductions run column by column in
/// storage order, so the result does not depend on `tile_cols`.
pub fn residual_report_tiled(
    problem: &TransportProblem,
    plan: &TransportPlan,
    cert: &DualCertificate,
    tile_cols: usize,
) -> Result<ResidualReport, OtError> {
    let (m, n) = (problem.m(), problem.n());
    plan.x.check_shape(m, n)?;
    if cert.mu.len() != m || cert.nu.len() != n {
        return Err(OtError::ShapeMismatch {
            expected: (m, n),
            found: (cert.mu.len(), cert.nu.len()),
        });
    }
    let tile_cols = tile_cols.max(1);
    let mut row_sums = vec![0.0; m];
    let mut col_defect_sq = 0.0;
    let mut dual_sq = 0.0;
    let mut cost_dot = 0.0;
    for start in (0..n).step_by(tile_cols) {
        for j in start..(start + tile_cols).min(n) {
            let x = plan.x.col(j);
            let c = problem.cost.col(j);
            let nu_j = cert.nu[j];
            let mut col_sum = 0.0;
            let mut col_dual = 0.0;
            let mut col_dot = 0.0;
            for i in 0..m {
                row_sums[i] += x[i];
                col_sum += x[i];
                col_dot += c[i] * x[i];
                let slack = cert.mu[i] + nu_j - c[i];
                if slack > 0.0 {
                    col_dual += slack * slack;
                }
            }
            let d = col_sum - problem.q[j];
            col_defect_sq += d * d;
            dual_sq += col_dual;
            cost_dot += col_dot;
        }
    }
    let row_defect_sq: f64 = row_sums
        .iter()
        .zip(&problem.p)
        .map(|(s, p)| (s - p) * (s - p))
        .sum();
    let dual_obj = cert.dual_objective(&problem.p, &problem.q);
    Ok(ResidualReport {
        r_primal: (row_defect_sq + col_defect_sq).sqrt(),
        r_dual: Some(dual_sq.sqrt()),
        gap: Some((cost_dot - dual_obj).abs()),
        objective: cost_dot,
    })
}

/// Violations of the three optimality conditions for a primal-dual pair:
/// (i) primal feasibility, (ii) dual feasibility, (iii) complementary slackness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityViolations {
    /// Largest absolute row or column sum defect.
    pub marginal: f64,
    /// Largest negative part of any plan entry.
    pub negativity: f64,
    /// Largest positive part of `mu_i + nu_j - c_ij`.
    pub dual: f64,
    /// `|<X, C - mu e^T - f nu^T>|`.
    pub slackness: f64,
}

impl OptimalityViolations {
    pub fn max(&self) -> f64 {
        self.marginal.max(self.negativity).max(self.dual).max(self.slackness)
    }
}

pub fn optimality_violations(
    problem: &TransportProblem,
    x: &Matrix,
    mu: &[f64],
    nu: &[f64],
) -> Result<OptimalityViolations, OtError> {
    let (m, n) = (problem.m(), problem.n());
    x.check_shape(m, n)?;
    if mu.len() != m || nu.len() != n {
        return Err(OtError::ShapeMismatch { expected: (m, n), found: (mu.len(), nu.len()) });
    }
    let rows = x.row_sums();
    let cols = x.col_sums();
    let marginal = rows
        .iter()
        .zip(&problem.p)
        .chain(cols.iter().zip(&problem.q))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut negativity = 0.0f64;
    let mut dual = 0.0f64;
    let mut slackness = 0.0;
    for j in 0..n {
        for i in 0..m {
            let xij = x.get(i, j);
            let reduced = problem.cost.get(i, j) - mu[i] - nu[j];
            negativity = negativity.max(-xij);
            dual = dual.max(-reduced);
            slackness += xij * reduced;
        }
    }
    Ok(OptimalityViolations { marginal, negativity, dual, slackness: slackness.abs() })
}

/// Why a solve stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    NumericalFailure,
}

/// One row of a convergence trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub r_primal: f64,
    pub r_dual: Option<f64>,
    pub gap: Option<f64>,
    pub objective: Option<f64>,
    pub ergodic_objective: Option<f64>,
    pub fixed_point_residual: Option<f64>,
}

/// Per-iteration metrics of a solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub wall_time_secs: f64,
}

impl SolveTrace {
    /// Appends a record; iteration indices must be strictly increasing.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.iteration > last.iteration, "trace iterations must increase");
        }
        self.records.push(record);
    }
}

/// Output of any solver in this crate.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub plan: TransportPlan,
    pub cert: Option<DualCertificate>,
    pub report: ResidualReport,
    pub trace: SolveTrace,
    pub status: SolveStatus,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
