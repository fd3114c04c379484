//! Sealed envelopes: X25519 ephemeral agreement against the recipient's
//! Ed25519 identity (mapped to Montgomery form), HKDF-SHA256, then the same
//! AES-256-GCM used for blobs.

use ed25519_dalek::VerifyingKey;
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use x25519_dalek::{EphemeralSecret, PublicKey as XPublic};

use super::aead::{decrypt_blob, encrypt_with_nonce, SealedBlob, NONCE_LEN, TAG_LEN};
use super::{CryptoError, Identity, SymmetricKey};
use crate::hexser;
use crate::types::PubKey;

const INFO: &[u8] = b"morpheo/sealed-envelope/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedEnvelope {
    #[serde(with = "hexser::array")]
    pub epk: [u8; 32],
    #[serde(with = "hexser::array")]
    pub nonce: [u8; NONCE_LEN],
    #[serde(with = "hexser::bytes")]
    pub ct: Vec<u8>,
    #[serde(with = "hexser::array")]
    pub tag: [u8; TAG_LEN],
}

impl SealedEnvelope {
    /// Storage form: the ephemeral key travels as a 32-byte ciphertext prefix.
    pub fn to_blob(&self) -> SealedBlob {
        let mut ciphertext = self.epk.to_vec();
        ciphertext.extend_from_slice(&self.ct);
        SealedBlob {
            nonce: self.nonce,
            ciphertext,
            tag: self.tag,
        }
    }

    pub fn from_blob(blob: &SealedBlob) -> Result<Self, CryptoError> {
        if blob.ciphertext.len() < 32 {
            return Err(CryptoError::DecryptionFailed);
        }
        let mut epk = [0u8; 32];
        epk.copy_from_slice(&blob.ciphertext[..32]);
        Ok(SealedEnvelope {
            epk,
            nonce: blob.nonce,
            ct: blob.ciphertext[32..].to_vec(),
            tag: blob.tag,
        })
    }
}

fn recipient_montgomery(recipient: &PubKey) -> Result<[u8; 32], CryptoError> {
    let key = VerifyingKey::from_bytes(&recipient.0).map_err(|_| CryptoError::InvalidKey)?;
    Ok(key.to_montgomery().to_bytes())
}

fn derive_key(shared: &[u8; 32], epk: &[u8; 32], recipient: &[u8; 32]) -> SymmetricKey {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(epk);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(INFO, &mut okm).expect("32 bytes is a valid HKDF length");
    SymmetricKey(okm)
}

pub fn seal_for_recipient<R: RngCore + CryptoRng>(
    recipient: &PubKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<SealedEnvelope, CryptoError> {
    let recipient_x = recipient_montgomery(recipient)?;
    let eph = EphemeralSecret::random_from_rng(&mut *rng);
    let epk = XPublic::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublic::from(recipient_x));
    if !shared.was_contributory() {
        return Err(CryptoError::InvalidKey);
    }
    let key = derive_key(shared.as_bytes(), &epk, &recipient_x);
    let mut nonce = [0u8; NONCE_LEN];
    rng.try_fill_bytes(&mut nonce)
        .map_err(|_| CryptoError::EntropyUnavailable)?;
    let sealed = encrypt_with_nonce(&key, nonce, plaintext);
    Ok(SealedEnvelope {
        epk,
        nonce: sealed.nonce,
        ct: sealed.ciphertext,
        tag: sealed.tag,
    })
}

pub fn open_sealed(identity: &Identity, envelope: &SealedEnvelope) -> Result<Vec<u8>, CryptoError> {
    let recipient_x = recipient_montgomery(&identity.public_key())?;
    let shared = identity
        .x25519_secret()
        .diffie_hellman(&XPublic::from(envelope.epk));
    if !shared.was_contributory() {
        return Err(CryptoError::DecryptionFailed);
    }
    let key = derive_key(shared.as_bytes(), &envelope.epk, &recipient_x);
    let blob = SealedBlob {
        nonce: envelope.nonce,
        ciphertext: envelope.ct.clone(),
        tag: envelope.tag,
    };
    decrypt_blob(&key, &blob).map_err(|_| CryptoError::DecryptionFailed)
}
