mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Rasterize(a) => commands::rasterize(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Match(a) => commands::match_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(f) => {
            commands::emit_fatal(&f);
            ExitCode::from(2)
        }
    }
}
