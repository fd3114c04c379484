//! Symmetric blob encryption, n-of-n key splitting, worker identities with
//! challenge signing, sealed envelopes, and custodian share release.

mod aead;
mod custody;
mod envelope;
mod identity;
mod shares;

pub use aead::{decrypt_blob, encrypt_blob, generate_key, SealedBlob, SymmetricKey, NONCE_LEN, TAG_LEN};
pub use custody::{CustodianNode, CustodyError, ReleaseRequest, DEFAULT_CHALLENGE_TTL_MS};
pub use envelope::{open_sealed, seal_for_recipient, SealedEnvelope};
pub use identity::{sign_challenge, verify_signature, Challenge, Identity};
pub use shares::{reconstruct_key, split_key, KeyShare, KeyShareSet};

use serde::{Deserialize, Serialize};

use crate::types::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum CryptoError {
    #[error("entropy source unavailable")]
    EntropyUnavailable,
    #[error("ciphertext failed authentication")]
    AuthenticationFailed,
    #[error("cannot split a key across zero nodes")]
    EmptyNodeList,
    #[error("node {0} listed twice")]
    DuplicateNode(NodeId),
    #[error("{got} of {expected} key shares present")]
    MissingShares { got: usize, expected: usize },
    #[error("{got} key shares given, expected {expected}")]
    TooManyShares { got: usize, expected: usize },
    #[error("sealed envelope could not be opened")]
    DecryptionFailed,
    #[error("malformed public key")]
    InvalidKey,
    #[error("signature does not verify")]
    BadSignature,
}
