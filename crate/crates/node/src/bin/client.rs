//! Data client: vault management, uploads, algorithm submission,
//! predictions, ledger audit and the local review gateway.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use morpheo_core::client::{Client, KeyVault};
use morpheo_core::ledger::RecordKind;
use morpheo_core::types::{AccountId, ChallengeId, Credits, NodeId, TaskId};
use morpheo_node::gateway::{self, Gateway};
use morpheo_node::remote::{parse_custodian, DefineChallenge, Endpoint, RemoteOrchestrator, RemotePlatform};

#[derive(Debug, Parser)]
#[command(about = "Client for the storage, custodian and orchestrator daemons")]
struct Args {
    /// Encrypted key vault.
    #[arg(long, default_value = "vault.bin")]
    vault: PathBuf,
    #[arg(long, env = "MORPHEO_PASSPHRASE", hide_env_values = true)]
    passphrase: Option<String>,
    #[arg(long, default_value = "http://127.0.0.1:7000")]
    orchestrator: String,
    #[arg(long, default_value = "http://127.0.0.1:7001")]
    storage: String,
    /// Custodian as NODE_ID=URL, in share order. Needed for uploads.
    #[arg(long = "custodian", value_parser = parse_custodian)]
    custodians: Vec<(NodeId, String)>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a new vault.
    Keygen {
        #[arg(long)]
        force: bool,
    },
    /// Encrypt and register a labeled CSV.
    Upload {
        file: PathBuf,
        #[arg(long)]
        challenge: ChallengeId,
        /// Register as the challenge's validation set.
        #[arg(long)]
        validation: bool,
    },
    /// Encrypt and register a trainer spec (JSON).
    SubmitAlgo {
        file: PathBuf,
        #[arg(long)]
        challenge: ChallengeId,
    },
    /// Request predictions for an unlabeled CSV.
    Predict {
        file: PathBuf,
        #[arg(long)]
        challenge: ChallengeId,
        #[arg(long)]
        payment: Credits,
    },
    /// Decrypt the labels of a finished prediction.
    Fetch { task: TaskId },
    /// Verify the chain and list this vault's involvement in it.
    Audit,
    Benchmark { challenge: ChallengeId },
    Balance,
    /// Serve the review gateway on a loopback address.
    ServeUi {
        #[arg(long, default_value = "127.0.0.1:7300")]
        listen: SocketAddr,
    },
    /// Operator commands; need the orchestrator's admin token.
    Admin {
        #[arg(long, env = "MORPHEO_ADMIN_TOKEN", hide_env_values = true)]
        token: Option<String>,
        #[command(subcommand)]
        command: AdminCommand,
    },
}

#[derive(Debug, Subcommand)]
enum AdminCommand {
    DefineChallenge {
        id: ChallengeId,
        /// Comma-separated labels.
        #[arg(long, value_delimiter = ',', required = true)]
        labels: Vec<String>,
        #[arg(long, default_value = "")]
        description: String,
    },
    /// Credit an account; defaults to this vault's.
    Fund {
        amount: Credits,
        #[arg(long)]
        account: Option<AccountId>,
    },
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn passphrase(args: &Args) -> anyhow::Result<String> {
    args.passphrase.clone().context("a passphrase is required (--passphrase or MORPHEO_PASSPHRASE)")
}

fn open(args: &Args) -> anyhow::Result<Client<ChaCha20Rng>> {
    let vault = KeyVault::open(&args.vault, &passphrase(args)?).with_context(|| format!("opening {}", args.vault.display()))?;
    Ok(Client::new(vault, ChaCha20Rng::from_entropy()))
}

fn save(args: &Args, client: &Client<ChaCha20Rng>) -> anyhow::Result<()> {
    client.vault().save(&args.vault, &passphrase(args)?, &mut OsRng)?;
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn run(args: &Args) -> anyhow::Result<ExitCode> {
    let mut platform = RemotePlatform::new(&args.storage, args.custodians.clone(), &args.orchestrator);
    match &args.command {
        Command::Keygen { force } => {
            if args.vault.exists() && !force {
                bail!("{} exists; pass --force to replace it", args.vault.display());
            }
            let vault = KeyVault::generate(&mut OsRng);
            vault.save(&args.vault, &passphrase(args)?, &mut OsRng)?;
            println!("account {}", vault.account());
            println!("pubkey  {}", vault.public_key());
        }
        Command::Upload { file, challenge, validation } => {
            let mut client = open(args)?;
            let kind = if *validation { RecordKind::Validation } else { RecordKind::RawData };
            let id = client.upload_data(&mut platform, &read(file)?, challenge, kind)?;
            save(args, &client)?;
            println!("{id}");
        }
        Command::SubmitAlgo { file, challenge } => {
            let mut client = open(args)?;
            let id = client.submit_algorithm(&mut platform, &read(file)?, challenge)?;
            save(args, &client)?;
            println!("{id}");
        }
        Command::Predict { file, challenge, payment } => {
            let mut client = open(args)?;
            let view = client.request_prediction(&mut platform, &read(file)?, challenge, *payment)?;
            save(args, &client)?;
            println!("{}", view.task_id);
        }
        Command::Fetch { task } => {
            let mut client = open(args)?;
            for label in client.fetch_prediction(&mut platform, task)? {
                println!("{label}");
            }
        }
        Command::Audit => {
            let report = open(args)?.audit(&mut platform)?;
            print_json(&report);
            if !report.verdict.is_valid() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Benchmark { challenge } => print_json(&open(args)?.benchmark(&mut platform, challenge)?),
        Command::Balance => println!("{}", open(args)?.balance(&mut platform)?),
        Command::ServeUi { listen } => {
            gateway::check_loopback(listen).map_err(anyhow::Error::msg)?;
            let client = open(args)?;
            let gw = Gateway::new(client, platform, Some(args.vault.clone()), passphrase(args)?);
            morpheo_node::run_server(*listen, gateway::router(gw))?;
        }
        Command::Admin { token, command } => {
            let orch = RemoteOrchestrator(Endpoint::new(&args.orchestrator).with_token(token.clone()));
            match command {
                AdminCommand::DefineChallenge { id, labels, description } => print_json(&orch.define_challenge(&DefineChallenge {
                    challenge_id: id.clone(),
                    description: description.clone(),
                    label_set: labels.iter().map(|l| l.as_str().into()).collect(),
                })?),
                AdminCommand::Fund { amount, account } => {
                    let account = match account {
                        Some(a) => a.clone(),
                        None => open(args)?.account(),
                    };
                    print_json(&orch.fund(&account, *amount)?);
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    morpheo_node::init_logging();
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
