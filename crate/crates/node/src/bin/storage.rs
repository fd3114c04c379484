//! Blob storage daemon.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use morpheo_core::storage::BlobStore;

#[derive(Debug, Parser)]
#[command(about = "Content-addressed storage for sealed blobs")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7001")]
    listen: SocketAddr,
    /// Blob directory; blobs are kept in memory when omitted.
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long)]
    capacity_bytes: Option<u64>,
}

fn main() -> anyhow::Result<()> {
    morpheo_node::init_logging();
    let args = Args::parse();
    let mut store = match &args.dir {
        Some(dir) => BlobStore::open(dir)?,
        None => BlobStore::in_memory(),
    };
    if let Some(cap) = args.capacity_bytes {
        store = store.with_capacity_bytes(cap);
    }
    morpheo_node::run_server(args.listen, morpheo_node::storage::router(store))
}
