//! Key custodian daemon.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use rand::RngCore;
use morpheo_core::clock::SystemClock;
use morpheo_core::types::{NodeId, PubKey};
use morpheo_node::custodian::{self, Custodian};

#[derive(Debug, Parser)]
#[command(about = "Holds key shares and releases them on ledger-checked challenge-response")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7101")]
    listen: SocketAddr,
    #[arg(long)]
    node_id: String,
    #[arg(long, default_value = "http://127.0.0.1:7000")]
    orchestrator: String,
    /// Hex Ed25519 key of the orchestrator; fetched from it when omitted.
    #[arg(long)]
    orchestrator_key: Option<PubKey>,
    /// File persisting held shares across restarts.
    #[arg(long)]
    shares_path: Option<PathBuf>,
}

fn main() -> anyhow::Result<()> {
    morpheo_node::init_logging();
    let args = Args::parse();
    let mut seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    let node = Custodian::new(
        NodeId::from(args.node_id.as_str()),
        seed,
        &args.orchestrator,
        args.orchestrator_key,
        args.shares_path,
        Arc::new(SystemClock),
    )?;
    morpheo_node::run_server(args.listen, custodian::router(node))
}
