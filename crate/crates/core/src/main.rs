use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmlab::cli::{self, ExperimentConfig, ExperimentKind, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "mmlab", version, about = "Monte Carlo experiments on ground-state weighted spaces")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set n_paths=1000` or `--set field.params.z=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the available experiments.
    ListExperiments,
    /// Parse and validate a config file without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match args.command {
        Command::ListExperiments => {
            let mut out = std::io::stdout().lock();
            for k in ExperimentKind::ALL {
                // a closed pipe (e.g. `| head`) is not an error worth reporting
                if writeln!(out, "{:<16} {}", k.name(), k.description()).is_err() {
                    break;
                }
            }
            0
        }
        Command::Validate { config, overrides } => match ExperimentConfig::load(&config, &overrides).and_then(|c| cli::setup(&c).map(|_| c)) {
            Ok(c) => {
                print!("{}", c.to_toml());
                0
            }
            Err(e) => {
                eprintln!("mmlab: {e}");
                EXIT_CONFIG
            }
        },
        Command::Run { config, overrides } => match ExperimentConfig::load(&config, &overrides) {
            Ok(cfg) => {
                let (code, outcome) = cli::execute(&cfg);
                match outcome {
                    Ok(report) => {
                        for c in &report.checks {
                            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                        }
                        println!("wrote {}", cfg.output_path.display());
                    }
                    Err(e) => eprintln!("mmlab: {e}"),
                }
                code
            }
            Err(e) => {
                eprintln!("mmlab: {e}");
                EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}
