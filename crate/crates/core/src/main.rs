use std::path::PathBuf;
use std::process::ExitCode;

use biortheq::cli::{describe, run, RunConfig, TaskKind, EXIT_IO, EXIT_VALIDATION};
use clap::Parser;

/// Weighted equilibrium, Fekete and biorthogonal-ensemble computations.
#[derive(Parser, Debug)]
#[command(name = "biortheq", version)]
struct Args {
    /// Task to run.
    #[arg(value_enum)]
    task: TaskKind,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("--threads must be positive");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
        }
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_IO as u8);
        }
    };
    let mut config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    if let Some(s) = args.seed {
        config.task.seed = Some(s);
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from(&config.output.directory));
    config.output.directory = out.display().to_string();
    let outcome = run(&config, args.task, &out);
    eprintln!("{}", describe(&outcome));
    if let Some(d) = outcome.summary.get("diagnostics").and_then(|d| d.as_array()) {
        for line in d {
            eprintln!("  {}", line.as_str().unwrap_or_default());
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}
