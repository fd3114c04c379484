//! Worker daemon: takes tasks from the orchestrator and runs each in a
//! fresh ephemeral worker.

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use morpheo_node::remote::{parse_custodian, RemotePlatform};
use morpheo_node::worker::{run_forever, run_one};

#[derive(Debug, Parser)]
#[command(about = "Runs learn and predict tasks")]
struct Args {
    #[arg(long, default_value = "http://127.0.0.1:7000")]
    orchestrator: String,
    #[arg(long, default_value = "http://127.0.0.1:7001")]
    storage: String,
    /// Custodian as NODE_ID=URL, in share order. Repeat for each node.
    #[arg(long = "custodian", value_parser = parse_custodian, required = true)]
    custodians: Vec<(morpheo_core::types::NodeId, String)>,
    /// Consume one task and exit.
    #[arg(long)]
    once: bool,
    /// Wait between polls of an empty queue.
    #[arg(long, default_value_t = 1000)]
    poll_ms: u64,
}

fn main() -> ExitCode {
    morpheo_node::init_logging();
    let args = Args::parse();
    let mut platform = RemotePlatform::new(&args.storage, args.custodians, &args.orchestrator);
    let mut rng = ChaCha20Rng::from_entropy();
    if !args.once {
        run_forever(&mut platform, &mut rng, Duration::from_millis(args.poll_ms));
    }
    match run_one(&mut platform, &mut rng) {
        Ok(Some(task)) => {
            println!("{task}");
            ExitCode::SUCCESS
        }
        Ok(None) => {
            eprintln!("no queued task");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
