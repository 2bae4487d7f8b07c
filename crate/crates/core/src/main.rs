use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use finality_lab::cli::{cmd_fuzz, cmd_oracle, cmd_run, load_scenario, OracleKind, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "finality-lab", version, about = "Run and check three-slot-finality consensus simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and check every property.
    Run {
        scenario: PathBuf,
        /// Directory for trace.txt, verdict.txt and metrics.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check randomized compliant variants of a scenario.
    Fuzz {
        scenario: PathBuf,
        #[arg(long)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare fork choice or justification against brute-force evaluators.
    Oracle {
        kind: OracleKind,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let code = match cli.command {
        Command::Run { scenario, out } => match load_scenario(&scenario) {
            Ok(cfg) => cmd_run(&cfg, out.as_deref()),
            Err(code) => code,
        },
        Command::Fuzz { scenario, runs, seed } => match load_scenario(&scenario) {
            Ok(cfg) => cmd_fuzz(&cfg, runs, seed),
            Err(code) => code,
        },
        Command::Oracle { kind, cases, seed } => cmd_oracle(kind, cases, seed),
    };
    ExitCode::from(code as u8)
}
