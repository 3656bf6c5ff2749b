use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nelson_core::measurement::PresetKind;
use nelson_lab::check::{run_checks, CheckArgs};
use nelson_lab::config::SEED_ENV;
use nelson_lab::{execute, summary, write_csv, CliError, RunArgs, RunConfig};

#[derive(Parser)]
#[command(name = "nelson-lab", version, about = "Stochastic-mechanics correlation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write its correlator CSV.
    #[command(allow_negative_numbers = true)]
    Run(RunArgs),
    /// List preset names.
    ListPresets,
    /// Run the invariant suite.
    Check(CheckArgs),
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let env_seed = std::env::var(SEED_ENV).ok();
    match cli.command {
        Command::Run(args) => {
            let cfg = RunConfig::resolve(&args, env_seed.as_deref())?;
            let outcome = execute(&cfg)?;
            write_csv(&cfg, &outcome.rows)?;
            print!("{}", summary(&cfg, &outcome));
            println!("wrote {}", cfg.out.display());
            Ok(!outcome.any_fail())
        }
        Command::ListPresets => {
            for k in PresetKind::ALL {
                println!("{:<28} {}", k.name(), k.description());
            }
            Ok(true)
        }
        Command::Check(args) => {
            let results = run_checks(&args, env_seed.as_deref())?;
            for r in &results {
                println!("{} {:<40} {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(results.iter().all(|r| r.pass))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
