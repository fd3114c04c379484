use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::CryptoError;
use crate::hexser;
use crate::types::BlobId;

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// 256-bit symmetric key. Zeroed on drop.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey(pub(crate) [u8; 32]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(<redacted>)")
    }
}

/// AES-256-GCM ciphertext with its nonce and detached tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBlob {
    #[serde(with = "hexser::array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "hexser::bytes")]
    pub ciphertext: Vec<u8>,
    #[serde(with = "hexser::array")]
    pub tag: [u8; TAG_LEN],
}

impl SealedBlob {
    /// `nonce || ciphertext || tag`, the layout content ids are computed over.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn content_id(&self) -> BlobId {
        BlobId(Sha256::digest(self.canonical_bytes()).into())
    }
}

pub fn generate_key<R: RngCore + CryptoRng>(rng: &mut R) -> Result<SymmetricKey, CryptoError> {
    let mut key = [0u8; 32];
    rng.try_fill_bytes(&mut key)
        .map_err(|_| CryptoError::EntropyUnavailable)?;
    Ok(SymmetricKey(key))
}

pub fn encrypt_blob<R: RngCore + CryptoRng>(
    key: &SymmetricKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<SealedBlob, CryptoError> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut nonce)
        .map_err(|_| CryptoError::EntropyUnavailable)?;
    Ok(encrypt_with_nonce(key, nonce, plaintext))
}

pub(crate) fn encrypt_with_nonce(key: &SymmetricKey, nonce: [u8; NONCE_LEN], plaintext: &[u8]) -> SealedBlob {
    let cipher = Aes256Gcm::new_from_slice(&key.0).expect("32-byte key");
    let mut buf = plaintext.to_vec();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&nonce), b"", &mut buf)
        .expect("plaintext within AES-GCM length limit");
    SealedBlob {
        nonce,
        ciphertext: buf,
        tag: tag.into(),
    }
}

pub fn decrypt_blob(key: &SymmetricKey, sealed: &SealedBlob) -> Result<Vec<u8>, CryptoError> {
    let cipher = Aes256Gcm::new_from_slice(&key.0).expect("32-byte key");
    let mut buf = sealed.ciphertext.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&sealed.nonce),
            b"",
            &mut buf,
            Tag::from_slice(&sealed.tag),
        )
        .map_err(|_| CryptoError::AuthenticationFailed)?;
    Ok(buf)
}
