//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::convergence::refinement_study;
use crate::error::{Error, Result};
use crate::scheme::DtPolicy;
use crate::sim::config::SimConfig;
use crate::sim::driver::{build_model, execute, initial_state, ExecuteOptions};
use crate::sim::scenario;

#[derive(Debug, Parser)]
#[command(
    name = "nonlocal-fv",
    version,
    about = "Upwind finite-volume solver for two-species nonlocal aggregation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write diagnostics and snapshots.
    Run {
        /// Config file, or the name of a shipped scenario.
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        snapshot_every: Option<u64>,
        /// Abort on the first invariant failure instead of warning.
        #[arg(long)]
        fatal_invariants: bool,
    },
    /// Validate a config and report its CFL budget.
    Check { config: String },
    /// Run a grid-refinement study.
    Convergence {
        config: String,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_text(name: &str) -> Result<String> {
    let path = Path::new(name);
    if path.exists() {
        return fs::read_to_string(path).map_err(|e| Error::io(path, e));
    }
    scenario(name).map(str::to_owned).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no such file or shipped scenario",
            ),
        )
    })
}

fn check(text: &str) -> Result<bool> {
    let config = SimConfig::parse_unchecked(text)?;
    let model = build_model(&config)?;
    let b = model.bounds();
    let budget = config.cfl_budget()?;
    println!("omega1 = {}", b.omega1);
    println!("omega2 = {}", b.omega2);
    println!("kappa = {}", b.kappa);
    println!("max dt = {budget}");
    let state = initial_state(&config)?;
    let effective = model.max_stable_dt(&state);
    if effective < budget {
        println!("max dt for the initial masses = {effective}");
    }
    let ok = match config.dt_policy {
        DtPolicy::Fixed(dt) => {
            println!("declared dt = {dt}");
            config.cfl_violation().is_none() && dt <= effective * (1.0 + crate::scheme::CFL_REL_TOL)
        }
        DtPolicy::CflFraction(theta) => {
            println!("declared dt = {} (cfl_fraction {theta})", theta * effective);
            true
        }
    };
    println!("{}", if ok { "OK" } else { "CFL VIOLATION" });
    Ok(ok)
}

pub fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            snapshot_every,
            fatal_invariants,
        } => {
            let config = SimConfig::parse(&load_text(&config)?)?;
            let options = ExecuteOptions {
                out_dir: out,
                snapshot_every,
                fatal_invariants,
            };
            let summary = execute(&config, &options)?;
            println!(
                "{} steps to t = {}, dt = {}, output in {}",
                summary.state.step_index,
                summary.state.time,
                summary.dt,
                summary.out_dir.display()
            );
            if !summary.invariant_failures.is_empty() {
                println!(
                    "{} invariant failures (see log)",
                    summary.invariant_failures.len()
                );
            }
            Ok(true)
        }
        Command::Check { config } => check(&load_text(&config)?),
        Command::Convergence {
            config,
            levels,
            out,
        } => {
            let config = SimConfig::parse(&load_text(&config)?)?;
            let levels = levels.unwrap_or(config.convergence_levels);
            let report = refinement_study(&config, levels)?;
            let csv = report.to_csv();
            print!("{csv}");
            let dir = out.unwrap_or_else(|| config.output.dir.clone());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join("convergence.csv");
            fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            Ok(true)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn shipped_scenarios_parse() {
        for (name, text) in crate::sim::SCENARIOS {
            SimConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
