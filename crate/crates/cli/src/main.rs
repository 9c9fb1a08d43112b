mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Worker threads for experiments; other commands run on one thread.
const WORKERS_ENV: &str = "NEGSAMP_WORKERS";

fn configure_pool(command: &Command) -> Result<(), commands::Failure> {
    let threads = match command {
        Command::Experiment(_) => match std::env::var(WORKERS_ENV) {
            Ok(v) => v.parse::<usize>().ok().filter(|n| *n > 0).ok_or_else(|| {
                commands::Failure::usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))
            })?,
            Err(_) => 0,
        },
        _ => 1,
    };
    // 0 lets rayon pick the number of logical CPUs
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| commands::Failure::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    let result = configure_pool(&cli.command).and_then(|()| match cli.command {
        Command::Generate(a) => commands::generate_cmd(a),
        Command::Pilot(a) => commands::pilot_cmd(a),
        Command::Sample(a) => commands::sample_cmd(a),
        Command::Fit(a) => commands::fit_cmd(a),
        Command::Experiment(a) => commands::experiment_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code as u8)
        }
    }
}
