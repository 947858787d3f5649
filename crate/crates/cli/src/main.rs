use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hessolve_cli::{cmd_solve, cmd_sweep, cmd_verify, configure_threads, exit, parse_gammas};

#[derive(Parser)]
#[command(
    name = "hessolve",
    version,
    about = "Degenerate Hessian-type Dirichlet solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve along the eps schedule and write fields, diagnostics and a manifest.
    Solve {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Tabulate C1/C2 surrogates over gamma and eps.
    Sweep {
        config: PathBuf,
        /// Comma-separated gamma values; empty uses the config's gamma.
        #[arg(long, default_value = "")]
        gammas: String,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a stored solution field against its config.
    Verify { solution: PathBuf, config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit::CONFIG as u8);
    }
    let code = match cli.command {
        Command::Solve { config, out } => cmd_solve(&config, &out),
        Command::Sweep {
            config,
            gammas,
            out,
        } => match parse_gammas(&gammas) {
            Ok(g) => cmd_sweep(&config, &g, &out),
            Err(e) => {
                eprintln!("error: {e}");
                exit::CONFIG
            }
        },
        Command::Verify { solution, config } => {
            cmd_verify(&solution, &config, &mut std::io::stdout())
        }
    };
    ExitCode::from(code as u8)
}
