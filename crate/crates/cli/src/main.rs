use std::process::ExitCode;

use clap::Parser;
use stormgrid_cli::{cmd_gen_scenarios, cmd_simulate, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args).map(|dir| println!("{}", dir.display())),
        Command::GenScenarios(args) => cmd_gen_scenarios(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stormgrid: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
