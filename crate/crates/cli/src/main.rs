mod args;
mod commands;

use clap::Parser;
use std::process::ExitCode;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CMAXLOC_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Bench(a) => {
            commands::sweep(&a, &[cmaxloc_core::synthbench::SolverKind::Ours], true)
        }
        Command::Compare(a) => {
            commands::sweep(&a, &cmaxloc_core::synthbench::SolverKind::ALL, false)
        }
        Command::ExportPlot(a) => commands::export_plot(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
