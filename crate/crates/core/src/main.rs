use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use collapse_lab::cli::{execute, parse_config, preset_config, ConfigError, Experiment, Options, RunError};

/// Stochastic collapse, decoherence and hybrid dynamics experiments.
#[derive(Parser)]
#[command(name = "collapse-lab", version)]
struct Args {
    /// qsd, cq, lindblad, timescale-jz, timescale-dp, preset-fig4, preset-fig5 or preset-fig6
    experiment: String,
    /// TOML run configuration (optional for presets)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides [run] seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overrides [run] output_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), RunError> {
    let experiment: Experiment = args.experiment.parse()?;
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Validation {
                key: "config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            parse_config(&text, Some(experiment))?
        }
        None => preset_config(experiment)?,
    };
    let options = Options { seed: args.seed, workers: args.workers, out: args.out };
    let report = execute(&config, &options)?;
    println!("{}: {}", experiment, report.summary);
    for a in &report.artifacts {
        println!("  {} ({} bytes)", report.output_dir.join(&a.file).display(), a.bytes);
    }
    println!("  {}", report.output_dir.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("collapse-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
