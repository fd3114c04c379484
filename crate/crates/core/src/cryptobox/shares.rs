//! n-of-n XOR key splitting. Every share is needed to rebuild the key; any
//! strict subset is uniformly distributed and independent of it.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use zeroize::Zeroize;

use super::{CryptoError, SymmetricKey};
use crate::hexser;
use crate::types::{BlobId, NodeId};

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize, Zeroize)]
pub struct KeyShare(#[serde(with = "hexser::array")] pub [u8; 32]);

impl std::fmt::Debug for KeyShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("KeyShare(<redacted>)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShareSet {
    pub record_id: BlobId,
    pub shares: Vec<(NodeId, KeyShare)>,
}

impl KeyShareSet {
    pub fn n(&self) -> usize {
        self.shares.len()
    }
}

pub fn split_key<R: RngCore + CryptoRng>(
    record_id: BlobId,
    key: &SymmetricKey,
    node_ids: &[NodeId],
    rng: &mut R,
) -> Result<KeyShareSet, CryptoError> {
    if node_ids.is_empty() {
        return Err(CryptoError::EmptyNodeList);
    }
    let mut seen = BTreeSet::new();
    for node in node_ids {
        if !seen.insert(node) {
            return Err(CryptoError::DuplicateNode(node.clone()));
        }
    }

    let mut last = *key.as_bytes();
    let mut shares = Vec::with_capacity(node_ids.len());
    for node in &node_ids[..node_ids.len() - 1] {
        let mut share = [0u8; 32];
        rng.try_fill_bytes(&mut share)
            .map_err(|_| CryptoError::EntropyUnavailable)?;
        xor_into(&mut last, &share);
        shares.push((node.clone(), KeyShare(share)));
    }
    shares.push((node_ids[node_ids.len() - 1].clone(), KeyShare(last)));
    last.zeroize();
    Ok(KeyShareSet { record_id, shares })
}

/// XOR of all shares. Refuses to produce anything unless exactly
/// `expected_n` shares are present.
pub fn reconstruct_key(shares: &[KeyShare], expected_n: usize) -> Result<SymmetricKey, CryptoError> {
    if shares.len() < expected_n || expected_n == 0 {
        return Err(CryptoError::MissingShares {
            got: shares.len(),
            expected: expected_n,
        });
    }
    if shares.len() > expected_n {
        return Err(CryptoError::TooManyShares {
            got: shares.len(),
            expected: expected_n,
        });
    }
    let mut key = [0u8; 32];
    for share in shares {
        xor_into(&mut key, &share.0);
    }
    Ok(SymmetricKey(key))
}

fn xor_into(acc: &mut [u8; 32], other: &[u8; 32]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}
