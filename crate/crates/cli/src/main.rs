use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nomastate::harness::{self, emit_report, ExperimentConfig, RunArtifacts};

#[derive(Parser)]
#[command(name = "nomastate", version, about = "Remote state estimation over NOMA uplinks")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the configured agent and evaluate it.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved agent under a config's environment.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every `*.toml` in a directory, one process per config.
    Sweep {
        dir: PathBuf,
        /// Maximum concurrent runs.
        #[arg(long)]
        jobs: Option<usize>,
        /// Parent directory for per-config outputs (default: `<dir>/out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = out {
        cfg.output.dir = out;
    }
    Ok(cfg)
}

fn finish(artifacts: &RunArtifacts, cfg: &ExperimentConfig) -> Result<ExitCode> {
    let files = emit_report(artifacts, &cfg.output.dir)?;
    let r = &artifacts.report;
    println!("{} mse={} status={}", r.algorithm.name(), r.mse, r.status);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(if r.is_ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn sweep(dir: &Path, jobs: Option<usize>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut configs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    if configs.is_empty() {
        bail!("no .toml configs in {}", dir.display());
    }
    let jobs = jobs
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1);
    let parent = out.unwrap_or_else(|| dir.join("out"));
    let exe = std::env::current_exe()?;
    let mut running: Vec<(PathBuf, Child)> = Vec::new();
    let mut failed = Vec::new();
    let mut wait_one = |running: &mut Vec<(PathBuf, Child)>| -> Result<()> {
        let (path, mut child) = running.remove(0);
        if !child.wait()?.success() {
            failed.push(path);
        }
        Ok(())
    };
    for cfg in &configs {
        if running.len() >= jobs {
            wait_one(&mut running)?;
        }
        let stem = cfg.file_stem().unwrap_or_default();
        let child = Command::new(&exe)
            .arg("run")
            .arg(cfg)
            .arg("--out")
            .arg(parent.join(stem))
            .spawn()
            .with_context(|| format!("spawning run for {}", cfg.display()))?;
        running.push((cfg.clone(), child));
    }
    while !running.is_empty() {
        wait_one(&mut running)?;
    }
    drop(wait_one);
    for f in &failed {
        eprintln!("failed: {}", f.display());
    }
    println!("{} of {} runs succeeded", configs.len() - failed.len(), configs.len());
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Cmd::Run { config, out } => {
            let cfg = load(&config, out)?;
            let artifacts = harness::run_experiment(&cfg)?;
            finish(&artifacts, &cfg)
        }
        Cmd::Eval { checkpoint, config, out } => {
            let cfg = load(&config, out)?;
            let artifacts = harness::evaluate_checkpoint(&checkpoint, &cfg)?;
            finish(&artifacts, &cfg)
        }
        Cmd::Sweep { dir, jobs, out } => sweep(&dir, jobs, out),
        Cmd::Selftest => {
            let mut all = true;
            for c in harness::selftest::selftest() {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                all &= c.passed;
            }
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}
