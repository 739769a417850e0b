use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linecover_cli::commands::{cmd_optimal, cmd_run, cmd_sweep, with_output_file};
use linecover_cli::config::{load_config, load_problem};
use linecover_cli::verify::{cmd_verify, DEFAULT_SIZES};
use linecover_cli::CliError;

/// Simulate and check the randomized coverage protocol on [0, 1].
#[derive(Parser)]
#[command(name = "linecover", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write `t,x_1,...,x_n,Q,phi,err_sq`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the optimal configuration for the configured density and n.
    Optimal {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the invariant suites and print pass/fail for each.
    ///
    /// Fixed budgets: order preservation 500 steps per size, field and
    /// noise model; gradient ratio 1000 states per size and field; Hessian
    /// bound for n = 1..50; unbiasedness 200000 draws at 3 states per size
    /// and noise level, within 4 standard errors; coverage oracle 20
    /// states per size and field on a 100000-point grid; optimum residuals
    /// within 1e-9.
    Verify {
        /// Comma-separated agent counts.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Run an ensemble of seeds and write `t,mean_err,stderr,bound,slope_so_far`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds, at least 2.
        #[arg(long)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        /// First seed of the ensemble; defaults to the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut summary = stdout.lock();
    match command {
        Command::Run { config, out, seed } => {
            let config = load_config(&config)?;
            with_output_file(&out, |w| cmd_run(&config, seed, w, &mut summary)).map(|_| ())
        }
        Command::Optimal { config } => {
            let (n, field) = load_problem(&config)?;
            cmd_optimal(n, &field, &mut summary).map(|_| ())
        }
        Command::Verify { sizes } => {
            let sizes = sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
            cmd_verify(&sizes, &mut summary).map(|_| ())
        }
        Command::Sweep { config, seeds, out, seed } => {
            let config = load_config(&config)?;
            if seeds < 2 {
                return Err(CliError::Usage("need ≥ 2 seeds".into()));
            }
            with_output_file(&out, |w| cmd_sweep(&config, seeds, seed, w, &mut summary)).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
