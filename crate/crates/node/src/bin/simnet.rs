//! Deterministic simulation runner.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use morpheo_core::simnet::{run_scenario, verify_trace, SimConfig};

#[derive(Debug, Parser)]
#[command(about = "Runs scripted scenarios on the in-process network")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and report privacy, replay and key-confidentiality checks.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trace here as NDJSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Re-check a recorded trace.
    VerifyTrace { file: PathBuf },
}

fn run(args: Args) -> anyhow::Result<bool> {
    match args.command {
        Command::Run { config, seed, out, json } => {
            let bytes = std::fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut config = SimConfig::from_json(&bytes)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let outcome = run_scenario(&config)?;
            let privacy = outcome.privacy();
            if let Some(path) = out {
                std::fs::write(&path, outcome.trace.to_ndjson()).with_context(|| format!("writing {}", path.display()))?;
            }
            let ok = privacy.valid && outcome.replay_ok && outcome.key_leaks.is_empty();
            let summary = serde_json::json!({
                "seed": config.seed,
                "events": outcome.trace.events.len(),
                "digest": outcome.trace.digest(),
                "actions": outcome.actions,
                "workers": outcome.workers,
                "privacy": privacy,
                "replay_ok": outcome.replay_ok,
                "key_leaks": outcome.key_leaks,
            });
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                println!("seed {}  events {}  digest {}", config.seed, outcome.trace.events.len(), outcome.trace.digest());
                for a in &outcome.actions {
                    match &a.result {
                        Ok(r) => println!("  [{}] {} {}: {}", a.index, a.actor, a.name, r),
                        Err(e) => println!("  [{}] {} {}: FAILED {}", a.index, a.actor, a.name, e),
                    }
                }
                for w in &outcome.workers {
                    println!("  {} #{} {}: {}", w.actor, w.assignment, w.task_id, w.end);
                }
                println!("privacy   {}", if privacy.valid { "ok" } else { "VIOLATED" });
                for v in &privacy.violations {
                    println!("  {} at {} ({})", v.actor, v.location, v.fingerprint);
                }
                println!("replay    {}", if outcome.replay_ok { "ok" } else { "MISMATCH" });
                println!("key leaks {}", outcome.key_leaks.len());
            }
            Ok(ok)
        }
        Command::VerifyTrace { file } => {
            let bytes = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let report = verify_trace(&bytes)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.is_clean())
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
