//! Orchestrator daemon.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use morpheo_core::clock::SystemClock;
use morpheo_core::cryptobox::Identity;
use morpheo_core::orchestrator::{Orchestrator, OrchestratorConfig};
use morpheo_node::orchestrator::{router, OrchestratorNode};
use morpheo_node::remote::{DefineChallenge, RemoteStorage};

#[derive(Debug, Parser)]
#[command(about = "Schedules tasks, keeps the signed ledger and settles payments")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7000")]
    listen: SocketAddr,
    /// NDJSON chain file; resumed if it exists.
    #[arg(long)]
    chain_path: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    /// Derive the signing key from this seed (simulation and tests).
    #[arg(long, conflicts_with = "key_file")]
    seed: Option<u64>,
    /// Hex signing key, created if missing. Defaults to `<chain-path>.key`.
    #[arg(long)]
    key_file: Option<PathBuf>,
    #[arg(long, default_value = "http://127.0.0.1:7001")]
    storage: String,
    #[arg(long, default_value_t = 0.1)]
    fee_rate: f64,
    /// Only start contributivity rounds on request.
    #[arg(long)]
    manual_contributivity: bool,
    /// Bearer token required on admin routes.
    #[arg(long, env = "MORPHEO_ADMIN_TOKEN")]
    admin_token: Option<String>,
    /// Challenge JSON {challenge_id, description, label_set} to define at
    /// startup unless already on the chain. Repeatable.
    #[arg(long)]
    challenge: Vec<PathBuf>,
}

fn load_or_create_key(path: &Path) -> anyhow::Result<Identity> {
    match std::fs::read_to_string(path) {
        Ok(text) => {
            let bytes: [u8; 32] = hex::decode(text.trim())
                .ok()
                .and_then(|b| b.try_into().ok())
                .with_context(|| format!("{} is not a 32-byte hex key", path.display()))?;
            Ok(Identity::from_secret_bytes(&bytes))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let id = Identity::generate(&mut rand::rngs::OsRng);
            std::fs::write(path, hex::encode(id.secret_bytes()))?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
            }
            Ok(id)
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> anyhow::Result<()> {
    morpheo_node::init_logging();
    let args = Args::parse();
    let signer = match (args.seed, &args.key_file, &args.chain_path) {
        (Some(seed), _, _) => Identity::generate(&mut ChaCha20Rng::seed_from_u64(seed)),
        (None, Some(path), _) => load_or_create_key(path)?,
        (None, None, Some(chain)) => load_or_create_key(&chain.with_extension("key"))?,
        (None, None, None) => Identity::generate(&mut rand::rngs::OsRng),
    };
    if !(0.0..1.0).contains(&args.fee_rate) {
        bail!("--fee-rate must be in [0, 1)");
    }
    let config = OrchestratorConfig {
        top_k: args.top_k,
        fee_rate: args.fee_rate,
        auto_contributivity: !args.manual_contributivity,
        ..OrchestratorConfig::default()
    };
    let clock = Arc::new(SystemClock);
    let mut orchestrator = match &args.chain_path {
        Some(path) => Orchestrator::open(path, signer, config, clock)?,
        None => Orchestrator::new(signer, config, clock),
    };
    for path in &args.challenge {
        let spec: DefineChallenge = serde_json::from_slice(&std::fs::read(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        if orchestrator.challenge(&spec.challenge_id).is_err() {
            orchestrator.define_challenge(spec.challenge_id, spec.description, spec.label_set)?;
        }
    }
    tracing::info!(pubkey = %orchestrator.pubkey(), blocks = orchestrator.ledger().len(), "orchestrator ready");
    let node = OrchestratorNode {
        orchestrator,
        storage: RemoteStorage::new(&args.storage),
    };
    morpheo_node::run_server(args.listen, router(node, args.admin_token))
}
