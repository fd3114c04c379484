//! Custodian node state: held key shares plus the challenge-response gate
//! that releases a share only to the worker the ledger assigned.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::identity::{verify_signature, Challenge};
use super::shares::KeyShare;
use crate::ledger::ChainIndex;
use crate::types::{BlobId, NodeId, PubKey, Sig, TaskId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum CustodyError {
    #[error("worker key is not assigned to the task on the ledger")]
    UnknownWorker,
    #[error("challenge signature does not verify")]
    BadSignature,
    #[error("challenge already consumed")]
    ChallengeReplayed,
    #[error("challenge was not issued by this node")]
    UnknownChallenge,
    #[error("challenge expired")]
    ChallengeExpired,
    #[error("record is not referenced by the task")]
    PurposeDenied,
    #[error("this node holds no share for the record")]
    ShareNotHeld,
    #[error("a different share is already held for the record")]
    ShareConflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleaseRequest {
    pub challenge: Challenge,
    pub worker_pubkey: PubKey,
    pub signature: Sig,
}

#[derive(Debug, Clone)]
struct Pending {
    challenge: Challenge,
    issued_at: u64,
}

pub const DEFAULT_CHALLENGE_TTL_MS: u64 = 60_000;

#[derive(Debug, Clone)]
pub struct CustodianNode {
    node_id: NodeId,
    shares: BTreeMap<BlobId, KeyShare>,
    pending: BTreeMap<[u8; 32], Pending>,
    consumed: BTreeSet<[u8; 32]>,
    ttl_ms: u64,
    rng: ChaCha20Rng,
}

impl CustodianNode {
    pub fn new(node_id: NodeId, rng_seed: [u8; 32]) -> Self {
        CustodianNode {
            node_id,
            shares: BTreeMap::new(),
            pending: BTreeMap::new(),
            consumed: BTreeSet::new(),
            ttl_ms: DEFAULT_CHALLENGE_TTL_MS,
            rng: ChaCha20Rng::from_seed(rng_seed),
        }
    }

    pub fn with_ttl(mut self, ttl_ms: u64) -> Self {
        self.ttl_ms = ttl_ms;
        self
    }

    pub fn node_id(&self) -> &NodeId {
        &self.node_id
    }

    pub fn deposit_share(&mut self, record_id: BlobId, share: KeyShare) -> Result<(), CustodyError> {
        match self.shares.get(&record_id) {
            Some(held) if *held != share => Err(CustodyError::ShareConflict),
            Some(_) => Ok(()),
            None => {
                self.shares.insert(record_id, share);
                Ok(())
            }
        }
    }

    pub fn holds(&self, record_id: &BlobId) -> bool {
        self.shares.contains_key(record_id)
    }

    /// Everything this node retains, for privacy instrumentation.
    pub fn held_shares(&self) -> impl Iterator<Item = (&BlobId, &KeyShare)> {
        self.shares.iter()
    }

    pub fn issue_challenge(&mut self, task_id: TaskId, record_id: BlobId, now: u64) -> Challenge {
        let mut nonce = [0u8; 32];
        loop {
            self.rng.fill_bytes(&mut nonce);
            if !self.pending.contains_key(&nonce) && !self.consumed.contains(&nonce) {
                break;
            }
        }
        let challenge = Challenge {
            nonce,
            task_id,
            node_id: self.node_id.clone(),
            record_id,
        };
        self.pending.insert(
            nonce,
            Pending {
                challenge: challenge.clone(),
                issued_at: now,
            },
        );
        challenge
    }

    /// Releases this node's share iff the request answers a live challenge
    /// from this node, the signer is the task's current assignee on the
    /// ledger, and the task references the record. The challenge is consumed
    /// by any attempt that names it.
    pub fn release_share(
        &mut self,
        request: &ReleaseRequest,
        ledger: &ChainIndex,
        now: u64,
    ) -> Result<KeyShare, CustodyError> {
        let nonce = request.challenge.nonce;
        if self.consumed.contains(&nonce) {
            return Err(CustodyError::ChallengeReplayed);
        }
        let pending = match self.pending.get(&nonce) {
            Some(p) if p.challenge == request.challenge => self.pending.remove(&nonce).expect("present"),
            _ => return Err(CustodyError::UnknownChallenge),
        };
        self.consumed.insert(nonce);

        if now.saturating_sub(pending.issued_at) > self.ttl_ms {
            return Err(CustodyError::ChallengeExpired);
        }
        let challenge = &pending.challenge;
        if ledger.current_assignee(&challenge.task_id) != Some(request.worker_pubkey) {
            return Err(CustodyError::UnknownWorker);
        }
        verify_signature(&request.worker_pubkey, &challenge.signing_bytes(), &request.signature)
            .map_err(|_| CustodyError::BadSignature)?;
        if !ledger.authorizes(&challenge.task_id, &request.worker_pubkey, &challenge.record_id) {
            return Err(CustodyError::PurposeDenied);
        }
        self.shares
            .get(&challenge.record_id)
            .cloned()
            .ok_or(CustodyError::ShareNotHeld)
    }
}
