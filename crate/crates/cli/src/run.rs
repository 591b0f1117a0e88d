//! The `solve` and `gen` commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use drot_core::probgen::{gen_gaussian_problem, GaussianSpec};
use drot_core::{SolveResult, SolveStatus, TransportProblem};
use serde::Serialize;

use crate::config::RunConfig;
use crate::matrix_io::{read_matrix_any, read_vector, vector_from_matrix, write_matrix, write_vector, Dtype};
use crate::solvers::run_solver;
use crate::CliError;

pub const NUMERICAL_FAILURE: &str = "numerical failure";

/// Builds the instance named by a config: files, or the generator with
/// `seed` overriding the spec's own seed.
pub fn load_problem(config: &RunConfig) -> Result<TransportProblem, CliError> {
    config.check()?;
    if let Some(path) = &config.cost {
        let cost = read_matrix_any(path)?;
        let p = match &config.p {
            Some(path) => read_marginal(path)?,
            None => vec![1.0 / cost.rows().max(1) as f64; cost.rows()],
        };
        let q = match &config.q {
            Some(path) => read_marginal(path)?,
            None => vec![1.0 / cost.cols().max(1) as f64; cost.cols()],
        };
        return Ok(TransportProblem::new_renormalized(cost, p, q)?);
    }
    let spec = generator_spec(config)?;
    Ok(gen_gaussian_problem(&spec)?)
}

fn read_marginal(path: &Path) -> Result<Vec<f64>, CliError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok(vector_from_matrix(read_matrix_any(path)?)?)
    } else {
        Ok(read_vector(path)?)
    }
}

fn generator_spec(config: &RunConfig) -> Result<GaussianSpec, CliError> {
    let mut spec = config.generator.clone().ok_or(crate::ConfigError::NoInput)?;
    if let Some(seed) = config.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

/// Machine-readable result of `solve`. Only `wall_time_secs` varies
/// between identical runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub solver: &'static str,
    pub status: SolveStatus,
    pub reason: Option<&'static str>,
    pub m: usize,
    pub n: usize,
    pub objective: f64,
    pub r_primal: f64,
    pub r_dual: Option<f64>,
    pub gap: Option<f64>,
    pub iterations: usize,
    pub wall_time_secs: f64,
}

impl Summary {
    pub fn new(config: &RunConfig, problem: &TransportProblem, result: &SolveResult) -> Self {
        Self {
            solver: config.solver.name(),
            status: result.status,
            reason: (result.status == SolveStatus::NumericalFailure).then_some(NUMERICAL_FAILURE),
            m: problem.m(),
            n: problem.n(),
            objective: result.report.objective,
            r_primal: result.report.r_primal,
            r_dual: result.report.r_dual,
            gap: result.report.gap,
            iterations: result.trace.iterations,
            wall_time_secs: result.trace.wall_time_secs,
        }
    }
}

pub struct SolveOutcome {
    pub summary: Summary,
    pub result: SolveResult,
    pub out_dir: PathBuf,
}

/// Solves and writes `plan.otmx`, `mu.otmx`, `nu.otmx`, `summary.json` and,
/// when tracing, `trace.jsonl` into the output directory.
pub fn cmd_solve(config: &RunConfig) -> Result<SolveOutcome, CliError> {
    let problem = load_problem(config)?;
    let result = run_solver(&problem, config)?;
    let summary = Summary::new(config, &problem, &result);
    let out_dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    write_matrix(&out_dir.join("plan.otmx"), &result.plan.x, Dtype::F64)?;
    if let Some(cert) = &result.cert {
        write_vector(&out_dir.join("mu.otmx"), &cert.mu)?;
        write_vector(&out_dir.join("nu.otmx"), &cert.nu)?;
    }
    let path = out_dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(CliError::io(&path))?;
    if config.trace {
        let path = out_dir.join("trace.jsonl");
        let mut text = Vec::new();
        for record in &result.trace.records {
            serde_json::to_writer(&mut text, record)?;
            text.push(b'\n');
        }
        fs::File::create(&path).and_then(|mut f| f.write_all(&text)).map_err(CliError::io(&path))?;
    }
    Ok(SolveOutcome { summary, result, out_dir })
}

/// Writes a generated instance as `cost.otmx`, `p.otmx`, `q.otmx` and the
/// spec that produced it as `spec.json`.
pub fn cmd_gen(config: &RunConfig) -> Result<(TransportProblem, PathBuf), CliError> {
    config.check()?;
    let spec = generator_spec(config)?;
    let problem = gen_gaussian_problem(&spec)?;
    let out_dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;
    write_matrix(&out_dir.join("cost.otmx"), problem.cost(), Dtype::F64)?;
    write_vector(&out_dir.join("p.otmx"), problem.p())?;
    write_vector(&out_dir.join("q.otmx"), problem.q())?;
    let path = out_dir.join("spec.json");
    fs::write(&path, serde_json::to_string_pretty(&spec)? + "\n").map_err(CliError::io(&path))?;
    Ok((problem, out_dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_seed_override() {
        let config = RunConfig { generator: Some(GaussianSpec::new(3, 3, 1)), seed: Some(8), ..RunConfig::default() };
        assert_eq!(load_problem(&config).unwrap(), gen_gaussian_problem(&GaussianSpec::new(3, 3, 8)).unwrap());
    }

    #[test]
    fn no_input_is_an_error() {
        assert!(matches!(load_problem(&RunConfig::default()), Err(CliError::Config(crate::ConfigError::NoInput))));
    }
}
