use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ugames::harness::{
    audit, describe_reference, load_config, load_game, load_policies, reference, run_experiment, Game, RunOptions,
};
use ugames::oracles::{DEFAULT_MARKOV_TOL, DEFAULT_MATRIX_TOL};
use ugames::par::Execution;
use ugames::Error;

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ugames",
    version,
    about = "Uncoupled learning in zero-sum matrix and Markov games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a configured multi-seed experiment and write traces and a summary.
    Run {
        config: PathBuf,
        /// Comma-separated seeds replacing the configured list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Root directory for run output.
        #[arg(long, env = "UGAMES_OUT_DIR", default_value = "runs")]
        out_dir: PathBuf,
        /// Oracle tolerance replacing the configured one.
        #[arg(long)]
        tol: Option<f64>,
        /// Worker threads for seeds; 1 runs sequentially.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Solve a game file and print its equilibrium and values.
    Solve {
        game: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Print the gaps of a policy pair on a game.
    Gap {
        game: PathBuf,
        policy: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidGame(_) | Error::InvalidStrategy(_) | Error::Dimension { .. } => CONFIG_ERROR,
        _ => RUNTIME_ERROR,
    }
}

fn default_tol(game: &Game) -> f64 {
    match game {
        Game::Matrix(_) => DEFAULT_MATRIX_TOL,
        Game::Markov(_) => DEFAULT_MARKOV_TOL,
    }
}

fn check_tol(tol: Option<f64>) -> Result<(), Error> {
    match tol {
        Some(t) if t.is_nan() || t <= 0.0 => Err(Error::Config(format!("--tol {t} must be positive"))),
        _ => Ok(()),
    }
}

fn run(command: Command) -> Result<(), (u8, Error)> {
    let config_err = |e: Error| (CONFIG_ERROR, e);
    match command {
        Command::Run {
            config,
            seeds,
            out_dir,
            tol,
            jobs,
        } => {
            check_tol(tol).map_err(config_err)?;
            if jobs == Some(0) {
                return Err(config_err(Error::Config("--jobs must be at least 1".into())));
            }
            let loaded = load_config(&config).map_err(config_err)?;
            let options = RunOptions {
                out_dir: Some(out_dir),
                execution: Execution::from_jobs(jobs),
                seeds,
                tol,
            };
            let outcome = run_experiment(&loaded, &options).map_err(|e| (exit_code(&e), e))?;
            let horizon = loaded.config.horizon;
            println!(
                "run {}: {} seeds ok, {} failed",
                outcome.run_id,
                outcome.runs.len(),
                outcome.failures.len()
            );
            for (seed, msg) in &outcome.failures {
                eprintln!("seed {seed} failed: {msg}");
            }
            for row in outcome.summary.iter().filter(|r| r.t == horizon) {
                let state = row.state.map(|s| format!("[{s}]")).unwrap_or_default();
                println!("  {}{state} at t={}: median {:.6e}", row.metric, row.t, row.median);
            }
            if let Some(dir) = &outcome.out_dir {
                println!("wrote {}", dir.display());
            }
            Ok(())
        }
        Command::Solve { game, tol } => {
            check_tol(tol).map_err(config_err)?;
            let game = load_game(&game).map_err(config_err)?;
            let tol = tol.unwrap_or_else(|| default_tol(&game));
            let solved = reference(&game, tol).map_err(|e| (RUNTIME_ERROR, e))?;
            print!("{}", describe_reference(&solved));
            Ok(())
        }
        Command::Gap { game, policy, tol } => {
            check_tol(tol).map_err(config_err)?;
            let game = load_game(&game).map_err(config_err)?;
            let (x, y) = load_policies(&policy).map_err(config_err)?;
            let tol = tol.unwrap_or_else(|| default_tol(&game));
            let gaps = audit(&game, &x, &y, tol).map_err(|e| (exit_code(&e), e))?;
            for g in gaps {
                match g.state {
                    Some(s) => println!("{}[{s}] = {}", g.metric, g.value),
                    None => println!("{} = {}", g.metric, g.value),
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            let loaded = load_config(&config).map_err(config_err)?;
            println!(
                "ok: {} ({}, T = {}, {} seeds, hash {})",
                loaded.run_id,
                loaded.config.algorithm.as_str(),
                loaded.config.horizon,
                loaded.config.seeds.len(),
                loaded.hash
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}
