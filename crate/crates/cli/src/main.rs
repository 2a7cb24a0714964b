use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forlion_cli::{cmd_compare, cmd_solve, cmd_trace, cmd_verify, Outcome};

#[derive(Parser)]
#[command(name = "forlion", version, about = "Locally D-optimal designs for mixed factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find a D-optimal design; writes the CSV and a JSON report beside it.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Check a design against the equivalence condition (exit 3 if it fails).
    Verify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        design: PathBuf,
        /// Grid points per continuous dimension.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Relative efficiency (|F_a| / |F_b|)^(1/p).
    Compare {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        design_b: PathBuf,
    },
    /// Sensitivity of a design over a grid, as CSV.
    Trace {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve {
            problem,
            out,
            seed_override,
        } => cmd_solve(problem, out, *seed_override),
        Command::Verify { problem, design, grid } => cmd_verify(problem, design, *grid),
        Command::Compare {
            problem,
            design,
            design_b,
        } => cmd_compare(problem, design, design_b),
        Command::Trace {
            problem,
            design,
            out,
            grid,
        } => cmd_trace(problem, design, out, *grid),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            e.outcome()
        }
    };
    if outcome == Outcome::NotConverged {
        eprintln!("warning: the solver stopped before meeting the convergence rule");
    }
    ExitCode::from(outcome as u8)
}
