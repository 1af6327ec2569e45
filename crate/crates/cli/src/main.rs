mod commands;
mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use serde_json::Value;

use config::{parse_config, Command, ConfigError, RunConfig};
use error::RunError;

/// Batch runner for the continuous-measurement experiments.
#[derive(Debug, Parser)]
#[command(name = "eventum", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `integration.master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory count (overrides `integration.n_trajectories`).
    #[arg(long)]
    trajectories: Option<usize>,
}

#[derive(Serialize)]
struct Versions {
    eventum: &'static str,
    eventum_core: &'static str,
}

#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    status: &'static str,
    exit_code: u8,
    error_class: Option<&'static str>,
    error_message: Option<String>,
    config: Value,
    master_seed: Option<u64>,
    n_trajectories: Option<usize>,
    /// Trajectory `k` draws its noise from the stream keyed by `(master_seed, k)`.
    seeding: &'static str,
    threads: usize,
    versions: Versions,
    wall_time_s: f64,
    artifacts: Vec<String>,
    results: Value,
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError::new_top(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(c) = cfg.command {
        if c != cli.command {
            return Err(ConfigError::new_at(
                "command",
                format!("config names '{}' but '{}' was requested", c.name(), cli.command.name()),
            )
            .into());
        }
    }
    cfg.command = Some(cli.command);
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.integration.master_seed = seed;
    }
    if let Some(n) = cli.trajectories {
        cfg.integration.n_trajectories = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<usize, RunError> {
    if let Ok(v) = std::env::var("EVENTUM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ConfigError::new_at("EVENTUM_THREADS", format!("must be a positive integer, got '{v}'")))?;
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

fn execute(cli: &Cli, cfg: &RunConfig) -> Result<commands::Outcome, RunError> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    commands::run(cli.command, cfg, out)
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(manifest).expect("manifest is serializable");
    fs::write(dir.join("manifest.json"), text + "\n")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let loaded = configure_threads().and_then(|threads| Ok((threads, load_config(&cli)?)));
    let (threads, cfg, result) = match loaded {
        Ok((threads, cfg)) => {
            let r = execute(&cli, &cfg);
            (threads, Some(cfg), r)
        }
        Err(e) => (rayon::current_num_threads(), None, Err(e)),
    };
    let out_dir = cfg
        .as_ref()
        .map(|c| c.output_dir.clone())
        .or_else(|| cli.out.clone())
        .unwrap_or_else(|| RunConfig::default().output_dir);
    let (status, code, class, message, artifacts, results) = match result {
        Ok(o) => ("ok", 0u8, None, None, o.artifacts, o.results),
        Err(e) => {
            eprintln!("eventum {}: {e}", cli.command.name());
            ("error", e.exit_code(), Some(e.class()), Some(e.to_string()), Vec::new(), Value::Null)
        }
    };
    let manifest = Manifest {
        command: cli.command.name(),
        status,
        exit_code: code,
        error_class: class,
        error_message: message,
        config: cfg.as_ref().map_or(Value::Null, |c| serde_json::to_value(c).expect("config is serializable")),
        master_seed: cfg.as_ref().map(|c| c.integration.master_seed),
        n_trajectories: cfg.as_ref().map(|c| c.integration.n_trajectories),
        seeding: "ChaCha20 stream per (master_seed, trajectory index)",
        threads,
        versions: Versions {
            eventum: env!("CARGO_PKG_VERSION"),
            eventum_core: eventum_core::VERSION,
        },
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts,
        results,
    };
    if let Err(e) = write_manifest(&out_dir, &manifest) {
        eprintln!("eventum: cannot write manifest to {}: {e}", out_dir.display());
        return ExitCode::from(code.max(1));
    }
    if status == "ok" {
        println!("{}", serde_json::to_string_pretty(&manifest.results).unwrap_or_default());
    }
    ExitCode::from(code)
}
