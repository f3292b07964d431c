use std::process::ExitCode;

use clap::Parser;

mod args;
mod commands;
mod output;
mod settings;

use args::{Cli, Command};
use settings::Usage;

/// 1 usage, 2 data, 3 numerical failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    if let Some(core) = e.downcast_ref::<subfuse_core::Error>() {
        return match core {
            subfuse_core::Error::InvalidConfig(_) => 1,
            c if c.is_numerical() => 3,
            _ => 2,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Scan(a) => commands::scan(a),
        Command::SynthCar(a) => commands::synth_car(a),
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
