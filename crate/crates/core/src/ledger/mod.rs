//! Append-only, hash-chained, orchestrator-signed event log.
//!
//! One event per block. Block `i` carries the SHA-256 of the canonical
//! encoding of block `i-1` (32 zero bytes for block 0) and an Ed25519
//! signature over `{event, index, prev_hash, timestamp}` in canonical JSON.
//! On disk the chain is newline-delimited canonical JSON, one block per line.

mod event;
mod index;
mod query;

pub use event::{Event, PredictionRequest, RecordKind, ShadowTag, SplitEntry, TaskKind};
pub use index::{ChainIndex, ChallengeRef, RecordRef, TaskRef};
pub use query::{query_learning, query_predictions, LearningTuple, PredictionTuple, TupleFilter};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

use crate::canonical;
use crate::cryptobox::{verify_signature, Identity};
use crate::types::{Digest32, PubKey, Sig};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum LedgerError {
    #[error("event refers to unknown or inconsistent state: {0}")]
    InvalidReference(String),
    #[error("performance {0} outside [0,1]")]
    InvalidPerformance(f64),
    #[error("no orchestrator signing key available")]
    SignerUnavailable,
    #[error("chain invalid at block {index}")]
    InvalidChain { index: u64 },
    #[error("chain file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest32,
    pub timestamp: u64,
    pub event: Event,
    pub orchestrator_signature: Sig,
}

pub const GENESIS_PREV_HASH: Digest32 = Digest32([0u8; 32]);

impl Block {
    pub fn signing_bytes(index: u64, prev_hash: &Digest32, timestamp: u64, event: &Event) -> Vec<u8> {
        canonical::to_vec(&json!({
            "event": event,
            "index": index,
            "prev_hash": prev_hash,
            "timestamp": timestamp,
        }))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_vec(self)
    }

    pub fn digest(&self) -> Digest32 {
        Digest32(Sha256::digest(self.canonical_bytes()).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ChainVerdict {
    Valid,
    Invalid { index: u64 },
}

impl ChainVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ChainVerdict::Valid)
    }
}

/// Checks genesis, hash links, signatures and referential invariants.
/// Returns the smallest offending index.
pub fn verify_chain(chain: &[Block], orchestrator_pubkey: &PubKey) -> ChainVerdict {
    let mut index = ChainIndex::default();
    let mut prev: Option<Digest32> = None;
    for (i, block) in chain.iter().enumerate() {
        let ok = block.index == i as u64
            && block.prev_hash == prev.unwrap_or(GENESIS_PREV_HASH)
            && verify_signature(
                orchestrator_pubkey,
                &Block::signing_bytes(block.index, &block.prev_hash, block.timestamp, &block.event),
                &block.orchestrator_signature,
            )
            .is_ok()
            && index.check(&block.event).is_ok();
        if !ok {
            return ChainVerdict::Invalid { index: i as u64 };
        }
        index.apply(&block.event);
        prev = Some(block.digest());
    }
    ChainVerdict::Valid
}

/// Verifies a serialized chain. A line that does not parse, or that is not
/// byte-identical to the canonical encoding of what it parses to, is invalid
/// at its own index.
pub fn verify_ndjson(text: &[u8], orchestrator_pubkey: &PubKey) -> ChainVerdict {
    let mut blocks = Vec::new();
    let body = text.strip_suffix(b"\n").unwrap_or(text);
    if body.is_empty() {
        return ChainVerdict::Valid;
    }
    for (i, line) in body.split(|b| *b == b'\n').enumerate() {
        match serde_json::from_slice::<Block>(line) {
            Ok(block) if block.canonical_bytes() == line => blocks.push(block),
            _ => {
                return match verify_chain(&blocks, orchestrator_pubkey) {
                    ChainVerdict::Valid => ChainVerdict::Invalid { index: i as u64 },
                    invalid => invalid,
                }
            }
        }
    }
    verify_chain(&blocks, orchestrator_pubkey)
}

pub fn to_ndjson(chain: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    for block in chain {
        out.extend_from_slice(&block.canonical_bytes());
        out.push(b'\n');
    }
    out
}

pub fn parse_ndjson(text: &[u8]) -> Result<Vec<Block>, LedgerError> {
    let mut blocks = Vec::new();
    for (i, line) in text.split(|b| *b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let block: Block =
            serde_json::from_slice(line).map_err(|_| LedgerError::InvalidChain { index: i as u64 })?;
        blocks.push(block);
    }
    Ok(blocks)
}

/// In-memory chain with its referential index. Appends are serialized by
/// `&mut self`; the owner decides how to share it.
#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    index: ChainIndex,
    pubkey: PubKey,
    signer: Option<Identity>,
}

impl Ledger {
    pub fn new(signer: Identity) -> Self {
        Ledger {
            blocks: Vec::new(),
            index: ChainIndex::default(),
            pubkey: signer.public_key(),
            signer: Some(signer),
        }
    }

    /// Verifies `blocks` and adopts them. `signer` may be `None` for a
    /// read-only replica.
    pub fn from_blocks(blocks: Vec<Block>, pubkey: PubKey, signer: Option<Identity>) -> Result<Self, LedgerError> {
        if let Some(s) = &signer {
            if s.public_key() != pubkey {
                return Err(LedgerError::SignerUnavailable);
            }
        }
        if let ChainVerdict::Invalid { index } = verify_chain(&blocks, &pubkey) {
            return Err(LedgerError::InvalidChain { index });
        }
        let mut index = ChainIndex::default();
        for b in &blocks {
            index.apply(&b.event);
        }
        Ok(Ledger {
            blocks,
            index,
            pubkey,
            signer,
        })
    }

    pub fn load(path: &Path, signer: Identity) -> Result<Self, LedgerError> {
        let text = match std::fs::read(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(LedgerError::Io(e.to_string())),
        };
        let pubkey = signer.public_key();
        Ledger::from_blocks(parse_ndjson(&text)?, pubkey, Some(signer))
    }

    pub fn append_event(&mut self, event: Event, timestamp: u64) -> Result<&Block, LedgerError> {
        let signer = self.signer.as_ref().ok_or(LedgerError::SignerUnavailable)?;
        self.index.check(&event)?;
        let index = self.blocks.len() as u64;
        let prev_hash = self.blocks.last().map(Block::digest).unwrap_or(GENESIS_PREV_HASH);
        let sig = signer.sign(&Block::signing_bytes(index, &prev_hash, timestamp, &event));
        self.index.apply(&event);
        self.blocks.push(Block {
            index,
            prev_hash,
            timestamp,
            event,
            orchestrator_signature: sig,
        });
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Adopts blocks produced elsewhere (replica catch-up), verifying each.
    pub fn extend_verified(&mut self, new_blocks: &[Block]) -> Result<(), LedgerError> {
        for block in new_blocks {
            let i = self.blocks.len() as u64;
            let prev = self.blocks.last().map(Block::digest).unwrap_or(GENESIS_PREV_HASH);
            let ok = block.index == i
                && block.prev_hash == prev
                && verify_signature(
                    &self.pubkey,
                    &Block::signing_bytes(block.index, &block.prev_hash, block.timestamp, &block.event),
                    &block.orchestrator_signature,
                )
                .is_ok()
                && self.index.check(&block.event).is_ok();
            if !ok {
                return Err(LedgerError::InvalidChain { index: i });
            }
            self.index.apply(&block.event);
            self.blocks.push(block.clone());
        }
        Ok(())
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn index(&self) -> &ChainIndex {
        &self.index
    }

    pub fn pubkey(&self) -> PubKey {
        self.pubkey
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Appends one block as a line to the chain file.
pub fn append_to_file(path: &Path, block: &Block) -> Result<(), LedgerError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LedgerError::Io(e.to_string()))?;
    let mut line = block.canonical_bytes();
    line.push(b'\n');
    f.write_all(&line).map_err(|e| LedgerError::Io(e.to_string()))
}
