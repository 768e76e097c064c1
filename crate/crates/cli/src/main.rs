//! `infgame`: run tug-of-war solves, Isaacs operator tables, Monte Carlo
//! games, residual checks and convergence studies from a JSON config.

mod commands;
mod config;
mod fail;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::fail::Failure;

#[derive(Parser)]
#[command(name = "infgame", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config leaf, e.g. `--set solver.eps=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the tug-of-war dynamic programming equation on a lattice.
    Solve(Common),
    /// Tabulate the bounded Isaacs operators against their limit.
    Isaacs {
        #[command(flatten)]
        common: Common,
        /// Gradient, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        p: Option<Vec<f64>>,
        /// Symmetric matrix, row-major and comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        s: Option<Vec<f64>>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        l: Option<f64>,
        /// plus, minus or both.
        #[arg(long)]
        side: Option<String>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Monte Carlo estimate of the game value for a strategy pair.
    Simulate(Common),
    /// Finite-difference residual of a solution or an analytic oracle.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Solution CSV written by `solve`.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Sup errors over a list of radii.
    Converge(Common),
}

fn json_list(v: &[f64]) -> String {
    serde_json::to_string(v).expect("finite floats serialize")
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, common, mut extra) = match &cli.command {
        Command::Solve(c) => ("solve", c, Vec::new()),
        Command::Simulate(c) => ("simulate", c, Vec::new()),
        Command::Converge(c) => ("converge", c, Vec::new()),
        Command::Verify { common, .. } => ("verify", common, Vec::new()),
        Command::Isaacs { common, p, s, k, l, side, n_max } => {
            let mut sets = Vec::new();
            if let Some(p) = p {
                sets.push(format!("isaacs.p={}", json_list(p)));
            }
            if let Some(s) = s {
                sets.push(format!("isaacs.S={}", json_list(s)));
            }
            if let Some(k) = k {
                sets.push(format!("isaacs.k={k:e}"));
            }
            if let Some(l) = l {
                sets.push(format!("isaacs.l={l:e}"));
            }
            if let Some(side) = side {
                sets.push(format!("isaacs.side={side}"));
            }
            if let Some(n) = n_max {
                sets.push(format!("isaacs.n_max={n}"));
            }
            ("isaacs", common, sets)
        }
    };
    let mut overrides = common.set.clone();
    overrides.append(&mut extra);
    let mut cfg = config::load(common.config.as_deref(), &overrides)?;
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    cfg.validate(name)?;
    match &cli.command {
        Command::Solve(_) => commands::solve(&cfg),
        Command::Isaacs { .. } => commands::isaacs(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Verify { solution, .. } => commands::verify(&cfg, solution.as_deref()),
        Command::Converge(_) => commands::converge(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("INFGAME_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: INFGAME_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status as u8)
        }
    }
}
