use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kinetic_games::experiments::{run_experiment, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "kinetic-games", version, about = "Kinetic and mean-field experiments for evolutionary games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Replace the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted `key=value` override, applied before validation. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config file without running it.
    Validate { config: PathBuf },
    /// List the available experiments.
    ListExperiments,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for kind in ExperimentKind::ALL {
                println!("{:<24} {}", kind.name(), kind.describe());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(cfg) => {
                println!("ok {} {}", cfg.experiment.name(), cfg.hash());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid config {}: {e}", config.display());
                ExitCode::from(2)
            }
        },
        Command::Run { config, seed, out, mut overrides } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            if let Some(dir) = out {
                overrides.push(format!("output_dir={}", serde_json::Value::String(dir.display().to_string())));
            }
            let cfg = match ExperimentConfig::load_with_overrides(&config, &overrides) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("invalid config {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&cfg) {
                Ok(summary) => {
                    for check in &summary.checks {
                        println!("{} {} = {:.6e}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.value);
                    }
                    if let Some(err) = &summary.error {
                        eprintln!("error: {err}");
                    }
                    println!("{:?} -> {}", summary.status, cfg.output_dir.join("summary.json").display());
                    ExitCode::from(summary.status.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
