use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use keff::cli::run::execute;
use keff::cli::{Overrides, SolverMode};
use keff::materials::synthetic::{synthetic_library, REFERENCE_LAYOUT};

#[derive(Parser)]
#[command(name = "keff", version, about = "Multigroup diffusion k-eigenvalue solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a TOML config.
    Solve {
        config: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SolverMode>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write a seeded synthetic fuel/reflector library.
    GenerateLibrary {
        #[arg(long)]
        groups: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<SolverMode, String> {
    SolverMode::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Exit 2 means "not converged"; argument errors are configuration errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Solve {
            config,
            mode,
            rank,
            eps,
            theta,
            seed,
            out_dir,
        } => execute(
            &config,
            &Overrides {
                mode,
                rank,
                eps,
                theta,
                seed,
                out_dir,
            },
        ),
        Command::GenerateLibrary { groups, seed, output } => {
            if groups == 0 {
                eprintln!("error: --groups must be at least 1");
                1
            } else {
                match std::fs::write(&output, synthetic_library(groups, &REFERENCE_LAYOUT, seed).to_toml()) {
                    Ok(()) => 0,
                    Err(e) => {
                        eprintln!("error: cannot write {}: {e}", output.display());
                        1
                    }
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
