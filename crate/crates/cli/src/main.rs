//! `funcld`: config-driven front end for rate sweeps, estimator runs,
//! deviation ladders and covering diagnostics.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use commands::{Outcome, RunError};
use config::{Command, ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "funcld", version, about = "Functional kernel regression and its large-deviation rates")]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for Monte-Carlo replicates.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config command.
    #[arg(long, value_enum)]
    command: Option<Command>,
}

fn load(args: &Args) -> Result<(RunConfig, Command, PathBuf), ConfigError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(c) = args.command {
        cfg.command = Some(c);
    }
    if let Some(o) = &args.out {
        cfg.output = Some(o.clone());
    }
    let command = cfg.command.ok_or_else(|| ConfigError("missing field `command`".into()))?;
    let out = cfg.output.clone().ok_or_else(|| ConfigError("missing field `output` (or pass --out)".into()))?;
    Ok((cfg, command, out))
}

fn dispatch(cfg: &RunConfig, command: Command, dir: &Path) -> Result<Outcome, RunError> {
    match command {
        Command::Rate => commands::rate(cfg, dir),
        Command::Estimate => commands::estimate(cfg, dir),
        Command::Simulate => commands::simulate(cfg, dir),
        Command::Uniform => commands::uniform(cfg, dir),
        Command::Cover => commands::cover(cfg, dir),
    }
}

fn write_manifest(
    dir: &Path,
    cfg: &RunConfig,
    command: Command,
    threads: usize,
    seconds: f64,
    outcome: &Outcome,
) -> std::io::Result<()> {
    let manifest = json!({
        "command": command,
        "seed": cfg.seed,
        "version": format!("funcld {}", env!("CARGO_PKG_VERSION")),
        "threads": threads,
        "wall_time_seconds": seconds,
        "outputs": outcome.outputs,
        "row_errors": outcome.row_errors,
        "warnings": outcome.warnings,
        "config": cfg,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text + "\n")
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (cfg, command, dir) = match load(&args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create {}: {e}", dir.display());
        return ExitCode::FAILURE;
    }
    let start = Instant::now();
    let outcome = match dispatch(&cfg, command, &dir) {
        Ok(o) => o,
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for e in &outcome.row_errors {
        eprintln!("row error: {e}");
    }
    let threads = rayon::current_num_threads();
    if let Err(e) = write_manifest(&dir, &cfg, command, threads, start.elapsed().as_secs_f64(), &outcome) {
        eprintln!("error: cannot write manifest: {e}");
        return ExitCode::FAILURE;
    }
    println!("{}", outcome.outputs.iter().map(|o| dir.join(o).display().to_string()).collect::<Vec<_>>().join("\n"));
    ExitCode::SUCCESS
}
