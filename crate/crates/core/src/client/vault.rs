//! Identity and record keys, encrypted at rest under a passphrase.

use argon2::{Algorithm, Argon2, Params, Version};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use zeroize::Zeroizing;

use super::ClientError;
use crate::cryptobox::{decrypt_blob, encrypt_blob, Identity, SealedBlob, SymmetricKey};
use crate::hexser;
use crate::ledger::RecordKind;
use crate::types::{AccountId, BlobId, ChallengeId, PubKey, TaskId};

/// Argon2id cost. Fixed so vault files open identically everywhere.
pub const KDF_MEMORY_KIB: u32 = 19 * 1024;
pub const KDF_ITERATIONS: u32 = 2;
pub const KDF_LANES: u32 = 1;

#[derive(Clone, Serialize, Deserialize)]
pub struct VaultRecord {
    #[serde(with = "hexser::array")]
    key: [u8; 32],
    pub challenge_id: ChallengeId,
    /// `None` for prediction inputs, which are stored but never registered.
    pub kind: Option<RecordKind>,
    /// SHA-256 of the plaintext, to refuse re-uploading the same content.
    #[serde(with = "hexser::array")]
    pub content_digest: [u8; 32],
    /// Rows for datasets, 0 for algorithm specs.
    pub rows: usize,
}

impl VaultRecord {
    pub fn key(&self) -> SymmetricKey {
        SymmetricKey::from_bytes(self.key)
    }
}

impl std::fmt::Debug for VaultRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VaultRecord")
            .field("challenge_id", &self.challenge_id)
            .field("kind", &self.kind)
            .field("rows", &self.rows)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingPrediction {
    pub input_record_id: BlobId,
    pub challenge_id: ChallengeId,
    pub rows: usize,
}

#[derive(Serialize, Deserialize)]
struct Contents {
    #[serde(with = "hexser::array")]
    identity: [u8; 32],
    records: BTreeMap<BlobId, VaultRecord>,
    predictions: BTreeMap<TaskId, PendingPrediction>,
}

#[derive(Serialize, Deserialize)]
struct VaultFile {
    #[serde(with = "hexser::array")]
    salt: [u8; 16],
    sealed: SealedBlob,
}

pub struct KeyVault {
    identity: Identity,
    records: BTreeMap<BlobId, VaultRecord>,
    predictions: BTreeMap<TaskId, PendingPrediction>,
}

impl std::fmt::Debug for KeyVault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyVault")
            .field("identity", &self.identity.public_key())
            .field("records", &self.records.len())
            .field("predictions", &self.predictions.len())
            .finish()
    }
}

fn derive(passphrase: &str, salt: &[u8; 16]) -> Result<SymmetricKey, ClientError> {
    let params = Params::new(KDF_MEMORY_KIB, KDF_ITERATIONS, KDF_LANES, Some(32))
        .map_err(|e| ClientError::Vault(e.to_string()))?;
    let mut out = Zeroizing::new([0u8; 32]);
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase.as_bytes(), salt, out.as_mut())
        .map_err(|e| ClientError::Vault(e.to_string()))?;
    Ok(SymmetricKey::from_bytes(*out))
}

impl KeyVault {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        KeyVault {
            identity: Identity::generate(rng),
            records: BTreeMap::new(),
            predictions: BTreeMap::new(),
        }
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn public_key(&self) -> PubKey {
        self.identity.public_key()
    }

    /// Lowercase hex of the identity public key.
    pub fn account(&self) -> AccountId {
        AccountId(self.public_key().to_hex())
    }

    pub fn records(&self) -> &BTreeMap<BlobId, VaultRecord> {
        &self.records
    }

    pub fn record(&self, id: &BlobId) -> Option<&VaultRecord> {
        self.records.get(id)
    }

    pub fn predictions(&self) -> &BTreeMap<TaskId, PendingPrediction> {
        &self.predictions
    }

    pub fn holds_content(&self, digest: &[u8; 32]) -> Option<BlobId> {
        self.records
            .iter()
            .find(|(_, r)| r.kind.is_some() && &r.content_digest == digest)
            .map(|(id, _)| *id)
    }

    pub(crate) fn insert_record(
        &mut self,
        id: BlobId,
        key: &SymmetricKey,
        challenge_id: ChallengeId,
        kind: Option<RecordKind>,
        content_digest: [u8; 32],
        rows: usize,
    ) {
        self.records.insert(
            id,
            VaultRecord {
                key: *key.as_bytes(),
                challenge_id,
                kind,
                content_digest,
                rows,
            },
        );
    }

    pub(crate) fn insert_prediction(&mut self, task: TaskId, pending: PendingPrediction) {
        self.predictions.insert(task, pending);
    }

    pub fn to_encrypted_bytes<R: RngCore + CryptoRng>(&self, passphrase: &str, rng: &mut R) -> Result<Vec<u8>, ClientError> {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let key = derive(passphrase, &salt)?;
        let contents = Contents {
            identity: self.identity.secret_bytes(),
            records: self.records.clone(),
            predictions: self.predictions.clone(),
        };
        let plain = Zeroizing::new(serde_json::to_vec(&contents).expect("vault contents serialize"));
        let sealed = encrypt_blob(&key, &plain, rng)?;
        Ok(serde_json::to_vec_pretty(&VaultFile { salt, sealed }).expect("vault file serializes"))
    }

    pub fn from_encrypted_bytes(bytes: &[u8], passphrase: &str) -> Result<Self, ClientError> {
        let file: VaultFile = serde_json::from_slice(bytes).map_err(|e| ClientError::Vault(e.to_string()))?;
        let key = derive(passphrase, &file.salt)?;
        let plain = Zeroizing::new(decrypt_blob(&key, &file.sealed).map_err(|_| ClientError::AuthenticationFailed)?);
        let contents: Contents = serde_json::from_slice(&plain).map_err(|e| ClientError::Vault(e.to_string()))?;
        Ok(KeyVault {
            identity: Identity::from_secret_bytes(&contents.identity),
            records: contents.records,
            predictions: contents.predictions,
        })
    }

    pub fn save<R: RngCore + CryptoRng>(&self, path: &Path, passphrase: &str, rng: &mut R) -> Result<(), ClientError> {
        let bytes = self.to_encrypted_bytes(passphrase, rng)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| ClientError::Vault(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| ClientError::Vault(e.to_string()))
    }

    pub fn open(path: &Path, passphrase: &str) -> Result<Self, ClientError> {
        let bytes = std::fs::read(path).map_err(|e| ClientError::Vault(e.to_string()))?;
        Self::from_encrypted_bytes(&bytes, passphrase)
    }
}
