use std::path::PathBuf;
use std::process::ExitCode;

use bohmtau::cli::{run, ExperimentConfig};
use bohmtau::Error;
use clap::Parser;

/// Measurement-and-friction wave packet simulator.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration: electron, gausson-nu0, gausson-friction, free,
    /// under-resolved, trajectories, small-friction-sweep, regime-sweep.
    #[arg(long)]
    preset: Option<String>,

    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(args: &Args) -> Result<bool, Error> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = match (&args.config, &args.preset) {
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        _ => return Err(Error::Config("give exactly one of --config or --preset".into())),
    };
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bohmtau-out"));
    let summary = run(&cfg, &dir)?;
    for line in &summary.messages {
        println!("{line}");
    }
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(summary.passed)
}
