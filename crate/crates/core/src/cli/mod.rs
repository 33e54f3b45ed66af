//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input, 3 step outside the invertibility
//! domain, 4 selector search cap exceeded, 5 I/O failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::ReachError;

pub mod commands;
pub mod config;
pub mod output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_INVERTIBLE: i32 = 3;
pub const EXIT_SEARCH_CAP: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error("writing {path}: {err}", path = .0.display(), err = .1)]
    Io(PathBuf, #[source] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Reach(ReachError::NotInInvertibilityDomain { .. }) => EXIT_NOT_INVERTIBLE,
            CliError::Reach(ReachError::SearchCapExceeded { .. }) => EXIT_SEARCH_CAP,
            CliError::Reach(_) => EXIT_INVALID,
            CliError::Io(..) => EXIT_IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "reach-under", version, about = "Zonotopic inner approximations of reachable sets of linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the tube Λ₀..Λ_N for a forward problem.
    Reach { config: PathBuf },
    /// Inner-approximate the backward reachable set of a target.
    Backward { config: PathBuf },
    /// Hausdorff gap at T for several step counts with the convergence schedule.
    Converge {
        config: PathBuf,
        #[arg(long = "N", value_delimiter = ',', default_value = "10,20,40,80")]
        steps: Vec<usize>,
    },
    /// Timing on random normalized systems with X₀ = U = unit box.
    RandomBench {
        #[arg(long = "n", value_delimiter = ',', default_value = "10,50,100")]
        dims: Vec<usize>,
        #[arg(long = "N", default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value = "random_bench.csv")]
        out: PathBuf,
    },
    /// Render a sets file as SVG.
    Plot {
        sets: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1, default_value = "1,2")]
        dims: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        overlay: bool,
    },
}

fn report(err: &CliError) -> i32 {
    eprintln!("error: {err}");
    err.exit_code()
}

/// Runs a parsed command, printing a summary; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Reach { config } => match commands::run_reach(&config) {
            Ok(out) => {
                let n = out.result.steps_count();
                println!(
                    "N={n} tau={:.6e} generators(Λ_N)={}",
                    out.result.tau,
                    out.result.lambda_gen_count(n)
                );
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
                EXIT_OK
            }
            Err(e) => report(&e),
        },
        Command::Backward { config } => match commands::run_backward(&config) {
            Ok(out) => {
                for (p, inside) in &out.membership {
                    let coords: Vec<String> = p.iter().map(|x| x.to_string()).collect();
                    println!("[{}] {}", coords.join(", "), if *inside { "inside" } else { "outside" });
                }
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
                EXIT_OK
            }
            Err(e) => report(&e),
        },
        Command::Converge { config, steps } => match commands::run_converge(&config, &steps) {
            Ok(out) => {
                for r in &out.rows {
                    println!("N={} tau={:.6e} gap={:.6e}", r.steps, r.tau, r.gap);
                }
                match out.slope {
                    Some(s) => println!("fitted log-log slope: {s:.4}"),
                    None => println!("fitted log-log slope: n/a (need at least two N)"),
                }
                EXIT_OK
            }
            Err(e) => report(&e),
        },
        Command::RandomBench {
            dims,
            steps,
            seed,
            runs,
            out,
        } => match commands::run_random_bench(&dims, steps, seed, runs, &out) {
            Ok(bench) => {
                for r in &bench.rows {
                    println!(
                        "n={} N={} wall={:.4}s generators={} max_kappa={}",
                        r.n, r.steps, r.wall_seconds, r.gen_count, r.max_kappa
                    );
                }
                for (n, e) in &bench.failures {
                    eprintln!("n={n}: {e}");
                }
                println!("wrote {}", bench.file.display());
                match bench.failures.into_iter().next() {
                    Some((_, e)) => CliError::Reach(e).exit_code(),
                    None => EXIT_OK,
                }
            }
            Err(e) => report(&e),
        },
        Command::Plot {
            sets,
            dims,
            out,
            overlay,
        } => {
            let dims = match dims.as_slice() {
                &[a, b] => [a, b],
                _ => return report(&ReachError::InvalidConfig("--dims takes two indices".into()).into()),
            };
            match commands::run_plot(&sets, dims, &out, overlay) {
                Ok(()) => {
                    println!("wrote {}", out.display());
                    EXIT_OK
                }
                Err(e) => report(&e),
            }
        }
    }
}
