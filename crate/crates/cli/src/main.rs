use std::fs;
use std::process::ExitCode;

use clap::Parser;
use drot_cli::args::{BenchArgs, Cli, ColorArgs, Command, ProfileArgs};
use drot_cli::bench::{cmd_bench, rows_to_csv, BenchSpec};
use drot_cli::color::{color_transfer, load_rgb, save_png};
use drot_cli::profile::{cmd_profile, ProfileSpec};
use drot_cli::run::{cmd_gen, cmd_solve, NUMERICAL_FAILURE};
use drot_cli::CliError;
use drot_core::fused::TileConfig;
use drot_core::{DrotConfig, SolveStatus};

const EXIT_ERROR: u8 = 1;
const EXIT_NUMERICAL_FAILURE: u8 = 2;

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn emit(out: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Solve(args) => {
            let outcome = cmd_solve(&args.resolve()?)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            if outcome.summary.status == SolveStatus::NumericalFailure {
                eprintln!("error: {NUMERICAL_FAILURE}");
                return Ok(ExitCode::from(EXIT_NUMERICAL_FAILURE));
            }
        }
        Command::Gen(args) => {
            let (problem, dir) = cmd_gen(&args.resolve()?)?;
            println!("wrote {}x{} instance to {}", problem.m(), problem.n(), dir.display());
        }
        Command::Profile(ProfileArgs { spec, m, n, instances, seed, out }) => {
            let spec = match spec {
                Some(path) => read_json(&path)?,
                None => ProfileSpec::robustness(m, n, instances, seed),
            };
            emit(out.as_deref(), &cmd_profile(&spec)?.to_csv()?)?;
        }
        Command::Bench(BenchArgs { spec, dims, kinds, runs, iters, seed, workers, bs, ws, deterministic, out }) => {
            let spec = match spec {
                Some(path) => read_json(&path)?,
                None => BenchSpec {
                    runs,
                    iters,
                    seed,
                    tiling: TileConfig { bs, ws, workers, deterministic },
                    ..BenchSpec::new(dims, kinds)
                },
            };
            emit(out.as_deref(), &rows_to_csv(&cmd_bench(&spec)?)?)?;
        }
        Command::ColorTransfer(ColorArgs { source, target, k, seed, tol, max_iters, workers, out }) => {
            let mut config = DrotConfig::default().with_tolerance(tol.unwrap_or(1e-6));
            if let Some(it) = max_iters {
                config.max_iters = it;
            }
            if let Some(w) = workers {
                config.tiling.workers = w;
            }
            let outcome = color_transfer(&load_rgb(&source)?, &load_rgb(&target)?, k, seed, &config)?;
            save_png(&out, &outcome.image)?;
            println!("{}", serde_json::to_string_pretty(&outcome.stats)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
