use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rotator_response::cli::{self, CliError, Outcome, RunConfig};

/// Response solutions of quasi-periodically forced rotators.
#[derive(Parser)]
#[command(name = "rotator", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export alpha_m and the scale ladder.
    Alpha {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one verification suite: oracle, counting, ward, symmetry, property1, bounds.
    Verify {
        suite: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Find candidates and continue the bifurcation curves.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Export plot data: psi, series_decay, curve.
    Plotdata {
        target: String,
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(command: Command) -> Result<Outcome, CliError> {
    let load = |p: &PathBuf| RunConfig::load(p).map_err(CliError::from);
    match command {
        Command::Alpha { config } => Ok(cli::cmd_alpha(&load(&config)?)?),
        Command::Verify { suite, config } => {
            if !cli::SUITES.contains(&suite.as_str()) {
                return Err(CliError::Usage(format!("unknown suite {suite:?}")));
            }
            cli::cmd_verify(&load(&config)?, &suite)
        }
        Command::Solve { config } => cli::cmd_solve(&load(&config)?),
        Command::Plotdata { target, config } => {
            if !cli::TARGETS.contains(&target.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown target {target:?}; expected one of {}",
                    cli::TARGETS.join(", ")
                )));
            }
            cli::cmd_plotdata(&load(&config)?, &target)
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() {
                cli::EXIT_USAGE
            } else {
                cli::EXIT_OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(args.command) {
        Ok(out) => {
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            println!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
