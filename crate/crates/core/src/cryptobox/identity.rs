use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::CryptoError;
use crate::hexser;
use crate::types::{BlobId, NodeId, PubKey, Sig, TaskId};

/// Ed25519 keypair. The secret half is never serialized by this type.
#[derive(Clone)]
pub struct Identity {
    signing: SigningKey,
}

impl Identity {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Identity {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_secret_bytes(secret: &[u8; 32]) -> Self {
        Identity {
            signing: SigningKey::from_bytes(secret),
        }
    }

    pub fn public_key(&self) -> PubKey {
        PubKey(self.signing.verifying_key().to_bytes())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    /// Clamped-before-use X25519 scalar derived from the same secret, so a
    /// sealed envelope addressed to `public_key()` can be opened.
    pub(crate) fn x25519_secret(&self) -> x25519_dalek::StaticSecret {
        x25519_dalek::StaticSecret::from(self.signing.to_scalar_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> Sig {
        Sig(self.signing.sign(msg).to_bytes())
    }
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Identity({})", self.public_key())
    }
}

pub fn verify_signature(pubkey: &PubKey, msg: &[u8], sig: &Sig) -> Result<(), CryptoError> {
    let key = VerifyingKey::from_bytes(&pubkey.0).map_err(|_| CryptoError::InvalidKey)?;
    key.verify(msg, &Signature::from_bytes(&sig.0))
        .map_err(|_| CryptoError::BadSignature)
}

/// A custodian's single-use proof-of-identity request for one record share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    #[serde(with = "hexser::array")]
    pub nonce: [u8; 32],
    pub task_id: TaskId,
    pub node_id: NodeId,
    pub record_id: BlobId,
}

impl Challenge {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut msg = b"morpheo/share-release/v1".to_vec();
        msg.extend_from_slice(&self.nonce);
        for part in [self.task_id.as_str(), self.node_id.as_str()] {
            msg.extend_from_slice(&(part.len() as u64).to_be_bytes());
            msg.extend_from_slice(part.as_bytes());
        }
        msg.extend_from_slice(self.record_id.as_bytes());
        msg
    }
}

pub fn sign_challenge(identity: &Identity, challenge: &Challenge) -> Sig {
    identity.sign(&challenge.signing_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn challenge() -> Challenge {
        Challenge {
            nonce: [7; 32],
            task_id: TaskId::from("task-000001"),
            node_id: NodeId::from("custodian-0"),
            record_id: BlobId([1; 32]),
        }
    }

    #[test]
    fn signature_verifies_under_own_key_only() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let me = Identity::generate(&mut rng);
        let other = Identity::generate(&mut rng);
        let c = challenge();
        let sig = sign_challenge(&me, &c);
        assert!(verify_signature(&me.public_key(), &c.signing_bytes(), &sig).is_ok());
        assert_eq!(
            verify_signature(&other.public_key(), &c.signing_bytes(), &sig),
            Err(CryptoError::BadSignature)
        );
    }

    #[test]
    fn challenge_fields_are_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let me = Identity::generate(&mut rng);
        let c = challenge();
        let sig = sign_challenge(&me, &c);
        let mut moved = c.clone();
        moved.record_id = BlobId([2; 32]);
        assert!(verify_signature(&me.public_key(), &moved.signing_bytes(), &sig).is_err());
    }

    #[test]
    fn seeded_identities_reproducible() {
        let a = Identity::generate(&mut ChaCha20Rng::seed_from_u64(8));
        let b = Identity::generate(&mut ChaCha20Rng::seed_from_u64(8));
        assert_eq!(a.public_key(), b.public_key());
        let round = Identity::from_secret_bytes(&a.secret_bytes());
        assert_eq!(round.public_key(), a.public_key());
    }
}
