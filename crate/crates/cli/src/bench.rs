//! Per-iteration timing of the solver kernels.

use std::time::Instant;

use drot_core::drot::{Drot, DrotConfig, Engine};
use drot_core::fused::{unfused_pass, FusedEngine, PassMode, Reductions, TileConfig};
use drot_core::probgen::{gen_gaussian_problem, GaussianSpec};
use drot_core::reference::{sinkhorn_solve, SinkhornConfig};
use drot_core::{Matrix, TransportProblem};
use serde::{Deserialize, Serialize};

use crate::matrix_io::format_f64;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BenchKind {
    /// Update, row sums, column sums and objective in one tiled pass.
    FusedPass,
    /// Update, row sums, column sums and objective as separate sweeps.
    UnfusedPass,
    /// Full DROT step on the fused engine.
    DrotFused,
    /// Full DROT step on the multi-sweep engine.
    DrotReference,
    /// Sinkhorn iteration; timed per run and divided by the iteration count.
    Sinkhorn,
}

impl BenchKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchKind::FusedPass => "fused-pass",
            BenchKind::UnfusedPass => "unfused-pass",
            BenchKind::DrotFused => "drot-fused",
            BenchKind::DrotReference => "drot-reference",
            BenchKind::Sinkhorn => "sinkhorn",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// Square sizes `m = n`.
    pub dims: Vec<usize>,
    pub kinds: Vec<BenchKind>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tiling: TileConfig,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_runs() -> usize {
    10
}

fn default_iters() -> usize {
    100
}

fn default_eta() -> f64 {
    1e-2
}

impl BenchSpec {
    pub fn new(dims: Vec<usize>, kinds: Vec<BenchKind>) -> Self {
        Self {
            dims,
            kinds,
            runs: default_runs(),
            iters: default_iters(),
            seed: 0,
            tiling: TileConfig::default(),
            eta: default_eta(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub kind: BenchKind,
    pub m: usize,
    pub n: usize,
    pub samples: usize,
    pub median_secs: f64,
    /// 2.5th percentile.
    pub lo_secs: f64,
    /// 97.5th percentile.
    pub hi_secs: f64,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of no samples");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Ratio of medians `slow / fast` at one size.
pub fn speedup(rows: &[BenchRow], fast: BenchKind, slow: BenchKind, dim: usize) -> Option<f64> {
    let median = |kind| rows.iter().find(|r| r.kind == kind && r.m == dim).map(|r| r.median_secs);
    Some(median(slow)? / median(fast)?)
}

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Dual vectors of the size that DROT produces after a few steps.
fn pass_inputs(problem: &TransportProblem) -> (Matrix, Vec<f64>, Vec<f64>, f64) {
    let (m, n) = (problem.m(), problem.n());
    let rho = 2.0 / (m + n) as f64;
    let phi = (0..m).map(|i| rho * 0.3 * ((i % 7) as f64 / 7.0 - 0.5)).collect();
    let varphi = (0..n).map(|j| rho * 0.3 * ((j % 5) as f64 / 5.0 - 0.5)).collect();
    (Matrix::outer(problem.p(), problem.q()), phi, varphi, rho)
}

fn samples_for(kind: BenchKind, problem: &TransportProblem, spec: &BenchSpec) -> Result<Vec<f64>, CliError> {
    let iters = spec.iters;
    let mut samples = Vec::new();
    for _ in 0..spec.runs {
        match kind {
            BenchKind::FusedPass | BenchKind::UnfusedPass => {
                let (mut xy, phi, varphi, rho) = pass_inputs(problem);
                let cost = problem.cost();
                let engine = FusedEngine::new(problem.m(), problem.n(), spec.tiling)?;
                for _ in 0..iters {
                    let (out, secs) = time(|| match kind {
                        BenchKind::FusedPass => engine.pass_with(&mut xy, cost, &phi, &varphi, rho, PassMode::Plain, Reductions::Lean),
                        _ => unfused_pass(&mut xy, cost, &phi, &varphi, rho),
                    });
                    out?;
                    samples.push(secs);
                }
            }
            BenchKind::DrotFused | BenchKind::DrotReference => {
                let engine = if kind == BenchKind::DrotFused { Engine::Fused } else { Engine::Reference };
                let config = DrotConfig {
                    engine,
                    tiling: spec.tiling,
                    deterministic: spec.tiling.deterministic,
                    ..DrotConfig::default()
                };
                let mut drot = Drot::<f64>::new(problem, &config, None)?;
                for _ in 0..iters {
                    let (out, secs) = time(|| drot.step());
                    out?;
                    samples.push(secs);
                }
            }
            BenchKind::Sinkhorn => {
                let config = SinkhornConfig {
                    eta: spec.eta,
                    tol: 0.0,
                    max_iters: iters,
                    check_every: iters,
                    ..SinkhornConfig::default()
                };
                let (res, secs) = time(|| sinkhorn_solve(problem, &config));
                let res = res?;
                samples.push(secs / res.trace.iterations.max(1) as f64);
            }
        }
    }
    Ok(samples)
}

/// Median and 95% interval of per-iteration wall time for every size and kind.
pub fn cmd_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>, CliError> {
    if spec.runs == 0 || spec.iters == 0 {
        return Err(drot_core::OtError::InvalidConfig("runs and iters must be positive".into()).into());
    }
    let mut rows = Vec::new();
    for &dim in &spec.dims {
        let gen = GaussianSpec { resample_degenerate: true, ..GaussianSpec::new(dim, dim, spec.seed) };
        let problem = gen_gaussian_problem(&gen)?;
        for &kind in &spec.kinds {
            let mut samples = samples_for(kind, &problem, spec)?;
            samples.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                kind,
                m: dim,
                n: dim,
                samples: samples.len(),
                median_secs: quantile(&samples, 0.5),
                lo_secs: quantile(&samples, 0.025),
                hi_secs: quantile(&samples, 0.975),
            });
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "m", "n", "samples", "median_secs", "lo95_secs", "hi95_secs"])?;
    for r in rows {
        w.write_record([
            r.kind.name().to_string(),
            r.m.to_string(),
            r.n.to_string(),
            r.samples.to_string(),
            format_f64(r.median_secs),
            format_f64(r.lo_secs),
            format_f64(r.hi_secs),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Io { path: "<csv buffer>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("CSV of ASCII fields"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.125), 1.5);
        assert_eq!(quantile(&[7.0], 0.975), 7.0);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [512.0f64, 1024.0, 2048.0].iter().map(|&x| (x * x, 3e-9 * x * x)).collect();
        assert!((log_log_slope(&pts) - 1.0).abs() < 1e-12);
        let sq: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0].iter().map(|&x| (x, x * x)).collect();
        assert!((log_log_slope(&sq) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_run_single_dim_gives_one_row_per_kind() {
        let spec = BenchSpec {
            runs: 1,
            iters: 3,
            ..BenchSpec::new(
                vec![16],
                vec![BenchKind::FusedPass, BenchKind::UnfusedPass, BenchKind::DrotFused, BenchKind::DrotReference, BenchKind::Sinkhorn],
            )
        };
        let rows = cmd_bench(&spec).unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert!(r.lo_secs <= r.median_secs && r.median_secs <= r.hi_secs);
        }
        assert_eq!(rows[0].samples, 3);
        assert_eq!(rows[4].samples, 1);
        let csv = rows_to_csv(&rows).unwrap();
        assert_eq!(csv.lines().count(), 6);
        assert!(speedup(&rows, BenchKind::FusedPass, BenchKind::UnfusedPass, 16).unwrap() > 0.0);
        assert_eq!(speedup(&rows, BenchKind::FusedPass, BenchKind::UnfusedPass, 32), None);
    }

    #[test]
    fn zero_runs_rejected() {
        let spec = BenchSpec { runs: 0, ..BenchSpec::new(vec![4], vec![BenchKind::FusedPass]) };
        assert!(cmd_bench(&spec).is_err());
    }
}
