use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fastbo::experiment::{cmd_compare, cmd_gen_synthetic, cmd_run, cmd_validate, CliError};

#[derive(Parser)]
#[command(name = "fastbo", version, about = "Multi-fidelity hyperparameter optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method for every seed in the config.
    Run {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Override a config key, e.g. `--set fastbo.top_m=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run several methods over the same seeds and summarize.
    Compare {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Write a synthetic benchmark file from a spec.
    GenSynthetic {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Check a benchmark file.
    Validate { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors count as configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { config, output, set } => cmd_run(&config, &output, &set),
        Command::Compare { config, output, set } => cmd_compare(&config, &output, &set),
        Command::GenSynthetic { spec, output, set } => cmd_gen_synthetic(&spec, &output, &set),
        Command::Validate { file } => cmd_validate(&file).map(|line| println!("{line}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
