//! Accuracy profiles: the fraction of random instances each solver solves to
//! a relative objective error `eps`, over a grid of `eps`.

use std::panic::{catch_unwind, AssertUnwindSafe};

use drot_core::probgen::{gen_gaussian_problem, GaussianSpec};
use drot_core::reference::lp_exact_with_limit;
use drot_core::{DrotConfig, SolveStatus, TransportProblem};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Solver, Stopping};
use crate::matrix_io::format_f64;
use crate::solvers::run_solver;
use crate::CliError;

/// Cell count up to which the exact simplex provides `f(X*)`.
pub const DEFAULT_ORACLE_MAX_CELLS: usize = 4096;
/// Tolerance of the DROT run standing in for `f(X*)` above the oracle cap.
pub const APPROX_REFERENCE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSolver {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub instances: usize,
    pub m: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub sigma_t: f64,
    /// Instance `i` is generated with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    pub solvers: Vec<ProfileSolver>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_oracle_cells")]
    pub oracle_max_cells: usize,
}

fn one() -> f64 {
    1.0
}

fn default_oracle_cells() -> usize {
    DEFAULT_ORACLE_MAX_CELLS
}

impl ProfileSpec {
    /// The robustness-profile suite: termination at constraint violation
    /// `1e-4` or 1000 iterations, DROT against plain Sinkhorn.
    pub fn robustness(m: usize, n: usize, instances: usize, seed: u64) -> Self {
        let base = RunConfig {
            stopping: Stopping::Primal,
            tol_primal: Some(1e-4),
            max_iters: Some(1000),
            ..RunConfig::default()
        };
        let sinkhorn = |label: &str, eta: f64, precision| ProfileSolver {
            label: label.into(),
            config: RunConfig {
                solver: Solver::Sinkhorn,
                eta: Some(eta),
                precision,
                stopping: Stopping::Full,
                check_every: Some(1),
                ..base.clone()
            },
        };
        Self {
            instances,
            m,
            n,
            sigma_t: 1.0,
            seed,
            solvers: vec![
                ProfileSolver { label: "drot".into(), config: base.clone() },
                sinkhorn("sinkhorn-1e-3", 1e-3, drot_core::Precision::F64),
                sinkhorn("sinkhorn-1e-1", 1e-1, drot_core::Precision::F64),
                sinkhorn("sinkhorn-1e-4-f32", 1e-4, drot_core::Precision::F32),
            ],
            epsilons: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
            oracle_max_cells: DEFAULT_ORACLE_MAX_CELLS,
        }
    }

    pub fn instance(&self, index: usize) -> GaussianSpec {
        GaussianSpec {
            sigma_t: self.sigma_t,
            resample_degenerate: true,
            ..GaussianSpec::new(self.m, self.n, self.seed.wrapping_add(index as u64))
        }
    }
}

/// Where `f(X*)` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Exact,
    /// High-accuracy DROT run; not certified optimal.
    ApproximateDrot,
}

impl ReferenceKind {
    pub fn tag(self) -> &'static str {
        match self {
            ReferenceKind::Exact => "lp-exact",
            ReferenceKind::ApproximateDrot => "warning:approximate-drot-1e-9",
        }
    }
}

/// How one solver fared on one instance.
#[derive(Clone, Debug, PartialEq)]
pub enum InstanceOutcome {
    /// Relative objective error of the returned plan.
    Finished { status: SolveStatus, rel_error: f64 },
    /// The solver returned an error or panicked.
    Crashed(String),
    /// No reference value could be computed.
    NoReference(String),
}

impl InstanceOutcome {
    fn solves(&self, eps: f64) -> bool {
        match self {
            InstanceOutcome::Finished { status, rel_error } => {
                *status != SolveStatus::NumericalFailure && *rel_error <= eps
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRow {
    pub label: String,
    pub epsilon: f64,
    pub solved: usize,
    pub instances: usize,
    pub numerical_failures: usize,
    pub crashes: usize,
    pub reference: ReferenceKind,
}

impl ProfileRow {
    pub fn fraction(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.solved as f64 / self.instances as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileReport {
    pub rows: Vec<ProfileRow>,
    /// `outcomes[s][i]`: solver `s` on instance `i`.
    pub outcomes: Vec<Vec<InstanceOutcome>>,
    pub reference: ReferenceKind,
}

impl ProfileReport {
    pub fn row(&self, label: &str, epsilon: f64) -> Option<&ProfileRow> {
        self.rows.iter().find(|r| r.label == label && r.epsilon == epsilon)
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["solver", "epsilon", "fraction", "solved", "instances", "numerical_failures", "crashes", "reference"])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                format_f64(r.epsilon),
                format_f64(r.fraction()),
                r.solved.to_string(),
                r.instances.to_string(),
                r.numerical_failures.to_string(),
                r.crashes.to_string(),
                r.reference.tag().to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io {
            path: "<csv buffer>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("CSV of ASCII fields"))
    }
}

fn catch<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(panic) => Err(panic
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| panic.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "solver panicked".into())),
    }
}

pub fn reference_value(problem: &TransportProblem, oracle_max_cells: usize) -> Result<(f64, ReferenceKind), String> {
    if problem.m() * problem.n() <= oracle_max_cells {
        let lp = lp_exact_with_limit(problem, oracle_max_cells).map_err(|e| e.to_string())?;
        return Ok((lp.objective, ReferenceKind::Exact));
    }
    let config = DrotConfig::default().with_tolerance(APPROX_REFERENCE_TOL);
    let res = drot_core::solve(problem, &config, None).map_err(|e| e.to_string())?;
    Ok((res.report.objective, ReferenceKind::ApproximateDrot))
}

fn relative_error(value: f64, reference: f64) -> f64 {
    let err = (value - reference).abs();
    let scaled = if reference != 0.0 { err / reference.abs() } else { err };
    if scaled.is_nan() { f64::INFINITY } else { scaled }
}

/// Runs every solver on every instance. Failures of any kind count as
/// unsolved; they never abort the suite.
pub fn cmd_profile(spec: &ProfileSpec) -> Result<ProfileReport, CliError> {
    for s in &spec.solvers {
        s.config.check()?;
    }
    let reference = if spec.m * spec.n <= spec.oracle_max_cells {
        ReferenceKind::Exact
    } else {
        ReferenceKind::ApproximateDrot
    };
    let mut outcomes = vec![Vec::with_capacity(spec.instances); spec.solvers.len()];
    if !spec.solvers.is_empty() {
        for index in 0..spec.instances {
            let inst = spec.instance(index);
            let prepared = catch(|| {
                let problem = gen_gaussian_problem(&inst).map_err(|e| e.to_string())?;
                let (f_star, _) = reference_value(&problem, spec.oracle_max_cells)?;
                Ok((problem, f_star))
            });
            for (s, solver) in spec.solvers.iter().enumerate() {
                let outcome = match &prepared {
                    Err(e) => InstanceOutcome::NoReference(e.clone()),
                    Ok((problem, f_star)) => {
                        match catch(|| run_solver(problem, &solver.config).map_err(|e| e.to_string())) {
                            Ok(res) => InstanceOutcome::Finished {
                                status: res.status,
                                rel_error: relative_error(res.report.objective, *f_star),
                            },
                            Err(e) => InstanceOutcome::Crashed(e),
                        }
                    }
                };
                outcomes[s].push(outcome);
            }
        }
    }
    let mut rows = Vec::new();
    for (s, solver) in spec.solvers.iter().enumerate() {
        let numerical_failures = outcomes[s]
            .iter()
            .filter(|o| matches!(o, InstanceOutcome::Finished { status: SolveStatus::NumericalFailure, .. }))
            .count();
        let crashes = outcomes[s].iter().filter(|o| !matches!(o, InstanceOutcome::Finished { .. })).count();
        for &epsilon in &spec.epsilons {
            rows.push(ProfileRow {
                label: solver.label.clone(),
                epsilon,
                solved: outcomes[s].iter().filter(|o| o.solves(epsilon)).count(),
                instances: spec.instances,
                numerical_failures,
                crashes,
                reference,
            });
        }
    }
    Ok(ProfileReport { rows, outcomes, reference })
}
