//! Run configuration: a JSON file whose fields mirror the command-line flags.

use std::path::PathBuf;

use drot_core::drot::{DrotConfig, Engine};
use drot_core::fused::TileConfig;
use drot_core::probgen::GaussianSpec;
use drot_core::reference::SinkhornConfig;
use drot_core::{Precision, Tolerances};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Single-array DROT with separate sweeps per step.
    Drot,
    /// Single-array DROT on the tiled fused kernel.
    #[default]
    DrotFused,
    /// Three-matrix Douglas-Rachford iteration.
    DrReference,
    /// ADMM on the consensus form.
    AdmmReference,
    /// Entropic regularization with Sinkhorn scaling.
    Sinkhorn,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Drot => "drot",
            Solver::DrotFused => "drot-fused",
            Solver::DrReference => "dr-reference",
            Solver::AdmmReference => "admm-reference",
            Solver::Sinkhorn => "sinkhorn",
        }
    }

    pub fn is_splitting(self) -> bool {
        !matches!(self, Solver::Sinkhorn)
    }
}

/// Which residuals the stopping test looks at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Stopping {
    /// Primal residual, dual residual and gap.
    #[default]
    Full,
    /// Constraint violation only.
    Primal,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("`{field}` does not apply to solver {solver}")]
    NotApplicable { field: &'static str, solver: &'static str },
    #[error("`rho0` and `rho` are mutually exclusive")]
    RhoConflict,
    #[error("`{field}` does not apply with primal-only stopping")]
    PrimalOnly { field: &'static str },
    #[error("`{field}` must be positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("`{field}` must be at least 1")]
    Zero { field: &'static str },
    #[error("give either a cost file or a generator, not both")]
    InputConflict,
    #[error("no input: set `cost` or `generator`")]
    NoInput,
    #[error("`p` and `q` require `cost`")]
    MarginalsWithoutCost,
}

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_ETA: f64 = 1e-2;

/// Every field is optional; unset fields take the solver's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub solver: Solver,
    pub rho0: Option<f64>,
    pub rho: Option<f64>,
    pub eta: Option<f64>,
    pub tol_primal: Option<f64>,
    pub tol_dual: Option<f64>,
    pub tol_gap: Option<f64>,
    pub stopping: Stopping,
    pub max_iters: Option<usize>,
    pub check_every: Option<usize>,
    pub precision: Precision,
    pub deterministic: Option<bool>,
    pub workers: Option<usize>,
    pub bs: Option<usize>,
    pub ws: Option<usize>,
    /// Read `C` only every other pass (fused solver).
    pub skip_cost: bool,
    pub seed: Option<u64>,
    /// Cost matrix (`.otmx` or `.csv`).
    pub cost: Option<PathBuf>,
    /// Source marginal; uniform when absent.
    pub p: Option<PathBuf>,
    /// Target marginal; uniform when absent.
    pub q: Option<PathBuf>,
    pub generator: Option<GaussianSpec>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Write a per-check JSONL trace.
    pub trace: bool,
}

pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.check()?;
    Ok(config)
}

fn positive(field: &'static str, value: Option<f64>) -> Result<(), ConfigError> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(ConfigError::NotPositive { field, value: v }),
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Rejects parameters that the chosen solver would silently ignore.
    pub fn check(&self) -> Result<(), ConfigError> {
        let solver = self.solver.name();
        let na = |field| Err(ConfigError::NotApplicable { field, solver });
        if self.eta.is_some() && self.solver != Solver::Sinkhorn {
            return na("eta");
        }
        if !self.solver.is_splitting() {
            if self.rho0.is_some() {
                return na("rho0");
            }
            if self.rho.is_some() {
                return na("rho");
            }
        }
        if self.rho0.is_some() && self.rho.is_some() {
            return Err(ConfigError::RhoConflict);
        }
        if self.solver != Solver::DrotFused {
            for (field, set) in [
                ("workers", self.workers.is_some()),
                ("bs", self.bs.is_some()),
                ("ws", self.ws.is_some()),
                ("skip_cost", self.skip_cost),
            ] {
                if set {
                    return na(field);
                }
            }
        }
        if self.stopping == Stopping::Primal {
            if self.tol_dual.is_some() {
                return Err(ConfigError::PrimalOnly { field: "tol_dual" });
            }
            if self.tol_gap.is_some() {
                return Err(ConfigError::PrimalOnly { field: "tol_gap" });
            }
        }
        if self.solver == Solver::Sinkhorn && (self.tol_dual.is_some() || self.tol_gap.is_some()) {
            return na(if self.tol_dual.is_some() { "tol_dual" } else { "tol_gap" });
        }
        positive("rho0", self.rho0)?;
        positive("rho", self.rho)?;
        positive("eta", self.eta)?;
        for (field, v) in [("tol_primal", self.tol_primal), ("tol_dual", self.tol_dual), ("tol_gap", self.tol_gap)] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return Err(ConfigError::NotPositive { field, value: v });
                }
            }
        }
        for (field, v) in [
            ("max_iters", self.max_iters),
            ("check_every", self.check_every),
            ("workers", self.workers),
            ("bs", self.bs),
            ("ws", self.ws),
        ] {
            if v == Some(0) {
                return Err(ConfigError::Zero { field });
            }
        }
        if self.cost.is_some() && self.generator.is_some() {
            return Err(ConfigError::InputConflict);
        }
        if self.cost.is_none() && (self.p.is_some() || self.q.is_some()) {
            return Err(ConfigError::MarginalsWithoutCost);
        }
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        let primal = self.tol_primal.unwrap_or(DEFAULT_TOL);
        match self.stopping {
            Stopping::Primal => Tolerances { primal, dual: f64::INFINITY, gap: f64::INFINITY, ..Tolerances::default() },
            Stopping::Full => Tolerances {
                primal,
                dual: self.tol_dual.unwrap_or(DEFAULT_TOL),
                gap: self.tol_gap.unwrap_or(DEFAULT_TOL),
                ..Tolerances::default()
            },
        }
    }

    pub fn drot_config(&self) -> DrotConfig {
        let base = DrotConfig::default();
        let deterministic = self.deterministic.unwrap_or(true);
        let engine = match (self.solver, self.skip_cost) {
            (Solver::DrotFused, true) => Engine::FusedSkipCost,
            (Solver::DrotFused, false) => Engine::Fused,
            _ => Engine::Reference,
        };
        let tiling = TileConfig {
            bs: self.bs.unwrap_or(base.tiling.bs),
            ws: self.ws.unwrap_or(base.tiling.ws),
            workers: self.workers.unwrap_or(base.tiling.workers),
            deterministic,
        };
        DrotConfig {
            rho0: self.rho0.unwrap_or(base.rho0),
            rho_override: self.rho,
            tolerances: self.tolerances(),
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            check_every: self.check_every.unwrap_or(base.check_every),
            deterministic,
            precision: self.precision,
            engine,
            tiling,
            record_trace: self.trace,
        }
    }

    pub fn sinkhorn_config(&self) -> SinkhornConfig {
        let base = SinkhornConfig::default();
        SinkhornConfig {
            eta: self.eta.unwrap_or(DEFAULT_ETA),
            tol: self.tol_primal.unwrap_or(DEFAULT_TOL),
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            check_every: self.check_every.unwrap_or(base.check_every),
            precision: self.precision,
            record_trace: self.trace,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(parse_run_config("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn field_names_match_flags() {
        let c = parse_run_config(
            r#"{"solver":"sinkhorn","eta":0.001,"tol_primal":1e-4,"max_iters":50,"precision":"f32","seed":3}"#,
        )
        .unwrap();
        assert_eq!(c.solver, Solver::Sinkhorn);
        let s = c.sinkhorn_config();
        assert_eq!((s.eta, s.tol, s.max_iters, s.precision), (1e-3, 1e-4, 50, Precision::F32));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(matches!(parse_run_config(r#"{"rh0":1}"#), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_run_config(r#"{"solver":"simplex"}"#), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn inconsistent_parameters_rejected() {
        assert_eq!(
            parse_run_config(r#"{"solver":"drot","eta":0.1}"#),
            Err(ConfigError::NotApplicable { field: "eta", solver: "drot" })
        );
        assert_eq!(
            parse_run_config(r#"{"solver":"sinkhorn","rho0":1}"#),
            Err(ConfigError::NotApplicable { field: "rho0", solver: "sinkhorn" })
        );
        assert_eq!(parse_run_config(r#"{"rho0":1,"rho":0.1}"#), Err(ConfigError::RhoConflict));
        assert_eq!(
            parse_run_config(r#"{"solver":"dr-reference","workers":2}"#),
            Err(ConfigError::NotApplicable { field: "workers", solver: "dr-reference" })
        );
        assert_eq!(
            parse_run_config(r#"{"stopping":"primal","tol_gap":1e-3}"#),
            Err(ConfigError::PrimalOnly { field: "tol_gap" })
        );
        assert!(matches!(parse_run_config(r#"{"rho0":-1}"#), Err(ConfigError::NotPositive { .. })));
        assert_eq!(parse_run_config(r#"{"bs":0}"#), Err(ConfigError::Zero { field: "bs" }));
        assert_eq!(
            parse_run_config(r#"{"cost":"c.otmx","generator":{"m":2,"n":2}}"#),
            Err(ConfigError::InputConflict)
        );
        assert_eq!(parse_run_config(r#"{"p":"p.otmx"}"#), Err(ConfigError::MarginalsWithoutCost));
    }

    #[test]
    fn engine_selection() {
        let fused = RunConfig { skip_cost: true, ..RunConfig::default() };
        assert_eq!(fused.drot_config().engine, Engine::FusedSkipCost);
        let plain = RunConfig { solver: Solver::Drot, ..RunConfig::default() };
        assert_eq!(plain.drot_config().engine, Engine::Reference);
    }

    #[test]
    fn primal_only_stopping() {
        let c = RunConfig { stopping: Stopping::Primal, tol_primal: Some(1e-4), ..RunConfig::default() };
        let t = c.tolerances();
        assert_eq!(t.primal, 1e-4);
        assert!(t.dual.is_infinite() && t.gap.is_infinite());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            solver: Solver::AdmmReference,
            rho: Some(0.05),
            generator: Some(GaussianSpec::new(4, 3, 9)),
            out: Some("run".into()),
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_run_config(&text).unwrap(), c);
    }
}
