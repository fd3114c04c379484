//! Identifier newtypes shared by every component.
//!
//! Binary identifiers (blob ids, public keys, signatures) serialize as
//! lowercase hex strings. Their `Ord` follows byte order, which coincides with
//! lowercase hex order, so every "ascending hex id" tie-break is plain `Ord`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid hex identifier: {0}")]
pub struct HexError(pub String);

pub(crate) fn decode_fixed<const N: usize>(s: &str) -> Result<[u8; N], HexError> {
    if s.len() != N * 2 || s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(HexError(s.to_string()));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|_| HexError(s.to_string()))?;
    Ok(out)
}

macro_rules! hex_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(self.0))
            }
        }

        impl FromStr for $name {
            type Err = HexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                decode_fixed::<$len>(s).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_bytes!(
    /// SHA-256 digest of a sealed blob's canonical encoding.
    BlobId,
    32
);
hex_bytes!(
    /// Ed25519 public key; a worker's id on the ledger.
    PubKey,
    32
);
hex_bytes!(
    /// Ed25519 signature.
    Sig,
    64
);
hex_bytes!(Digest32, 32);

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

string_id!(AccountId);
string_id!(TaskId);
string_id!(ChallengeId);
string_id!(
    /// Custodian node name.
    NodeId
);

/// Class label of a supervised challenge.
pub type Label = String;

/// Integer platform credits.
pub type Credits = u64;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_id_hex_round_trip() {
        let id = BlobId([0xab; 32]);
        let s = serde_json::to_string(&id).unwrap();
        assert_eq!(s, format!("\"{}\"", "ab".repeat(32)));
        let back: BlobId = serde_json::from_str(&s).unwrap();
        assert_eq!(back, id);
    }

    #[test]
    fn uppercase_and_short_hex_rejected() {
        assert!("AB".repeat(32).parse::<BlobId>().is_err());
        assert!("ab".parse::<BlobId>().is_err());
    }

    #[test]
    fn ordering_matches_hex_order() {
        let mut ids = [BlobId([0xf0; 32]), BlobId([0x0f; 32]), BlobId([0xa0; 32])];
        ids.sort();
        let hexes: Vec<String> = ids.iter().map(|i| i.to_hex()).collect();
        let mut sorted = hexes.clone();
        sorted.sort();
        assert_eq!(hexes, sorted);
    }
}
