//! Command-line flags and their merge into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use drot_core::probgen::GaussianSpec;
use drot_core::Precision;

use crate::bench::BenchKind;
use crate::config::{parse_run_config, RunConfig, Solver, Stopping};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "drot", version, about = "Douglas-Rachford optimal transport solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and write plan, duals and a JSON summary.
    Solve(RunArgs),
    /// Write a generated instance as OTMX files.
    Gen(RunArgs),
    /// Accuracy profile of several solvers over random instances (CSV).
    Profile(ProfileArgs),
    /// Per-iteration timings (CSV).
    Bench(BenchArgs),
    /// Recolor an image with the palette of another.
    ColorTransfer(ColorArgs),
}

/// Flags that mirror the fields of the JSON run configuration.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub solver: Option<Solver>,
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub tol_primal: Option<f64>,
    #[arg(long)]
    pub tol_dual: Option<f64>,
    #[arg(long)]
    pub tol_gap: Option<f64>,
    #[arg(long, value_enum)]
    pub stopping: Option<Stopping>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub check_every: Option<usize>,
    #[arg(long)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub deterministic: Option<bool>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub bs: Option<usize>,
    #[arg(long)]
    pub ws: Option<usize>,
    #[arg(long)]
    pub skip_cost: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cost matrix, `.otmx` or `.csv`.
    #[arg(long)]
    pub cost: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<PathBuf>,
    #[arg(long)]
    pub q: Option<PathBuf>,
    /// Generate an `m x n` instance instead of reading files.
    #[arg(long, requires = "n")]
    pub m: Option<usize>,
    #[arg(long, requires = "m")]
    pub n: Option<usize>,
    #[arg(long)]
    pub sigma_t: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trace: bool,
}

impl RunArgs {
    /// The config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => parse_run_config(&std::fs::read_to_string(path).map_err(CliError::io(path))?)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = &self.$field { c.$field = Some(v.clone()); } )* };
        }
        set!(rho0, rho, eta, tol_primal, tol_dual, tol_gap, max_iters, check_every, deterministic, workers, bs, ws, seed, cost, p, q, out);
        if let Some(s) = self.solver {
            c.solver = s;
        }
        if let Some(s) = self.stopping {
            c.stopping = s;
        }
        if let Some(p) = self.precision {
            c.precision = p;
        }
        c.skip_cost |= self.skip_cost;
        c.trace |= self.trace;
        if let (Some(m), Some(n)) = (self.m, self.n) {
            c.cost = None;
            c.generator = Some(GaussianSpec::new(m, n, 0));
        }
        if let (Some(sigma_t), Some(spec)) = (self.sigma_t, c.generator.as_mut()) {
            spec.sigma_t = sigma_t;
        }
        c.check()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// JSON suite spec; without it the robustness suite is used.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON bench spec; flags below are ignored when given.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "512,1024,2048,4096")]
    pub dims: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "drot-fused,drot-reference,sinkhorn")]
    pub kinds: Vec<BenchKind>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 64)]
    pub bs: usize,
    #[arg(long, default_value_t = 4)]
    pub ws: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub deterministic: bool,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ColorArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = crate::color::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}
