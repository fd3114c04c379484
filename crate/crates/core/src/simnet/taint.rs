use memchr::memmem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

use super::trace::{Trace, TraceEvent};
use crate::cryptobox::{decrypt_blob, reconstruct_key, SymmetricKey};
use crate::local::LocalNetwork;
use crate::types::BlobId;

/// Shorter plaintexts are matched by whole-payload digest only; a substring
/// search for a few bytes would flag unrelated coincidences.
pub const MIN_SUBSTRING_LEN: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaintMap {
    /// Hex SHA-256 of every plaintext buffer and symmetric key produced
    /// during the run.
    pub fingerprints: BTreeSet<String>,
    /// Actor to fingerprints seen in messages it sent or received.
    pub observed: BTreeMap<String, BTreeSet<String>>,
    /// Actor to fingerprints found in its state after the run.
    pub retained: BTreeMap<String, BTreeSet<String>>,
    #[serde(skip)]
    sources: Vec<(String, Vec<u8>, Vec<u8>)>,
}

impl TaintMap {
    pub fn add(&mut self, plaintext: &[u8]) {
        let fp = hex::encode(Sha256::digest(plaintext));
        if self.fingerprints.insert(fp.clone()) {
            self.sources
                .push((fp, plaintext.to_vec(), hex::encode(plaintext).into_bytes()));
        }
    }

    /// Fingerprints of tainted buffers present in `haystack`, either raw,
    /// hex-encoded, or as the whole of it.
    pub fn find(&self, haystack: &[u8]) -> Vec<String> {
        let whole = hex::encode(Sha256::digest(haystack));
        self.sources
            .iter()
            .filter(|(fp, raw, hexed)| {
                *fp == whole
                    || (raw.len() >= MIN_SUBSTRING_LEN
                        && (memmem::find(haystack, raw).is_some() || memmem::find(haystack, hexed).is_some()))
            })
            .map(|(fp, _, _)| fp.clone())
            .collect()
    }

    pub(crate) fn retain(&mut self, actor: &str, hits: Vec<String>) {
        if !hits.is_empty() {
            self.retained.entry(actor.to_string()).or_default().extend(hits);
        }
    }

    /// Fills the taint field of every message and the observed map.
    pub(crate) fn scan_trace(&mut self, trace: &mut Trace) {
        for event in &mut trace.events {
            if let TraceEvent::Message { seq, from, to, taint, .. } = event {
                let Some(payload) = trace.payloads.get(seq) else { continue };
                let hits = self.find(payload);
                if hits.is_empty() {
                    continue;
                }
                for actor in [&*from, &*to] {
                    self.observed.entry(actor.clone()).or_default().extend(hits.iter().cloned());
                }
                *taint = hits;
            }
        }
    }

    /// Storage blobs, custodian shares and the ledger, as they stand.
    pub(crate) fn scan_state(&mut self, net: &LocalNetwork) {
        let mut storage = Vec::new();
        for blob in net.storage.iter() {
            storage.extend(self.find(&blob.sealed.canonical_bytes()));
        }
        self.retain("storage", storage);
        for node in &net.custodians {
            let held: Vec<_> = node.held_shares().collect();
            let bytes = serde_json::to_vec(&held).expect("shares serialize");
            let mut hits = self.find(&bytes);
            for (_, share) in held {
                hits.extend(self.find(&share.0));
            }
            self.retain(node.node_id().as_str(), hits);
        }
        let chain = crate::ledger::to_ndjson(net.orchestrator.ledger().blocks());
        self.retain("orchestrator", self.find(&chain));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub actor: String,
    pub location: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyVerdict {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl PrivacyVerdict {
    pub fn names(&self, actor: &str) -> bool {
        self.violations.iter().any(|v| v.actor == actor)
    }
}

/// Valid iff no tainted buffer crossed any message and none is retained by
/// storage, custodians, the orchestrator or a destroyed worker. Messages
/// with in-memory payloads are rescanned; otherwise recorded hits are used.
pub fn assert_privacy(trace: &Trace, taint: &TaintMap) -> PrivacyVerdict {
    let mut violations = Vec::new();
    for event in &trace.events {
        if let TraceEvent::Message { seq, from, to, op, taint: recorded, .. } = event {
            let hits = match trace.payload(*seq) {
                Some(p) => taint.find(p),
                None => recorded.clone(),
            };
            for fingerprint in hits {
                violations.push(Violation {
                    actor: from.clone(),
                    location: format!("message {seq} ({op} to {to})"),
                    fingerprint,
                });
            }
        }
    }
    for (actor, fps) in &taint.retained {
        if actor.starts_with("client:") {
            continue;
        }
        for fp in fps {
            violations.push(Violation {
                actor: actor.clone(),
                location: "retained state".into(),
                fingerprint: fp.clone(),
            });
        }
    }
    PrivacyVerdict {
        valid: violations.is_empty(),
        violations,
    }
}

/// Tries to recover each stored record using one custodian's shares alone,
/// both through `reconstruct_key` and by treating the lone share as the key.
/// Returns a description of every success.
pub fn key_confidentiality(net: &LocalNetwork, known_keys: &BTreeMap<BlobId, SymmetricKey>) -> Vec<String> {
    let n = net.custodians.len();
    let mut problems = Vec::new();
    for node in &net.custodians {
        for (record, share) in node.held_shares() {
            if reconstruct_key(std::slice::from_ref(share), n).is_ok() {
                problems.push(format!("{} alone reconstructs a key for {record}", node.node_id()));
            }
            if known_keys.get(record).is_some_and(|k| k.as_bytes() == &share.0) {
                problems.push(format!("{} holds the key of {record} verbatim", node.node_id()));
            }
            if let Ok(stored) = net.storage.get_blob(record) {
                if decrypt_blob(&SymmetricKey::from_bytes(share.0), &stored.sealed).is_ok() {
                    problems.push(format!("{}'s share decrypts {record}", node.node_id()));
                }
            }
        }
    }
    problems
}
