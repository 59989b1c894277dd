use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use croms::harness::{self, ExperimentConfig, HarnessError};

/// Replicated simulations for conformalized robust optimization with model
/// selection.
#[derive(Debug, Parser)]
#[command(name = "croms", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write CSV/SVG results.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's output_dir, else croms-out/<name>).
        #[arg(long, env = "CROMS_OUT_DIR")]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long, env = "CROMS_JOBS")]
        jobs: Option<usize>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// List the built-in presets.
    Presets,
    /// Preset operations.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Debug, Subcommand)]
enum PresetAction {
    /// Print a preset as a config file.
    Dump { name: String },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, HarnessError> {
    let src = std::fs::read_to_string(path).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml_str(&src).map_err(|e| match e {
        HarnessError::Parse(m) => HarnessError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, jobs, seed } => load(&config).and_then(|mut cfg| {
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let dir = out
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("croms-out").join(&cfg.name));
            let report = harness::run(&cfg, &dir, jobs)?;
            println!(
                "{} rows, {} summary rows written to {}",
                report.rows,
                report.summary_rows,
                dir.display()
            );
            Ok(())
        }),
        Command::Validate { config } => load(&config).map(|_| println!("ok")),
        Command::Presets => {
            for (name, about) in harness::PRESETS {
                println!("{name:<24} {about}");
            }
            Ok(())
        }
        Command::Preset {
            action: PresetAction::Dump { name },
        } => harness::preset(&name)
            .and_then(|p| p.to_toml_string())
            .map(|text| print!("{text}")),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
