//! Content-addressed store of sealed blobs. It holds ciphertext only: this
//! module has no access to keys and never decrypts.
//!
//! Optional persistence is a flat directory with one file per blob, named by
//! the hex id and holding `nonce || ciphertext || tag`, plus `manifest.ndjson`
//! with one `{id, kind, size}` line per blob.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cryptobox::{SealedBlob, NONCE_LEN, TAG_LEN};
use crate::types::BlobId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlobKind {
    RawData,
    Algorithm,
    Model,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredBlob {
    pub id: BlobId,
    pub sealed: SealedBlob,
    pub kind: BlobKind,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum StorageError {
    #[error("storage capacity exhausted")]
    StorageFull,
    #[error("blob {0} not found")]
    NotFound(BlobId),
    #[error("blob {0} on disk does not hash to its name")]
    Corrupt(BlobId),
    #[error("storage io: {0}")]
    Io(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: BlobId,
    kind: BlobKind,
    size: u64,
}

#[derive(Debug, Default, Clone)]
pub struct BlobStore {
    blobs: BTreeMap<BlobId, StoredBlob>,
    dir: Option<PathBuf>,
    capacity: Option<u64>,
    used: u64,
}

fn io(e: std::io::Error) -> StorageError {
    StorageError::Io(e.to_string())
}

impl BlobStore {
    pub fn in_memory() -> Self {
        BlobStore::default()
    }

    pub fn with_capacity_bytes(mut self, capacity: u64) -> Self {
        self.capacity = Some(capacity);
        self
    }

    /// Opens (or creates) a persistent store, re-verifying every blob
    /// against its content id.
    pub fn open(dir: &Path) -> Result<Self, StorageError> {
        std::fs::create_dir_all(dir).map_err(io)?;
        let mut store = BlobStore {
            dir: Some(dir.to_path_buf()),
            ..BlobStore::default()
        };
        let manifest = match std::fs::read_to_string(dir.join("manifest.ndjson")) {
            Ok(m) => m,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        for line in manifest.lines().filter(|l| !l.is_empty()) {
            let entry: ManifestLine =
                serde_json::from_str(line).map_err(|e| StorageError::Io(e.to_string()))?;
            let bytes = std::fs::read(dir.join(entry.id.to_hex())).map_err(io)?;
            if bytes.len() < NONCE_LEN + TAG_LEN {
                return Err(StorageError::Corrupt(entry.id));
            }
            let (nonce, rest) = bytes.split_at(NONCE_LEN);
            let (ct, tag) = rest.split_at(rest.len() - TAG_LEN);
            let sealed = SealedBlob {
                nonce: nonce.try_into().expect("length checked"),
                ciphertext: ct.to_vec(),
                tag: tag.try_into().expect("length checked"),
            };
            if sealed.content_id() != entry.id {
                return Err(StorageError::Corrupt(entry.id));
            }
            store.used += entry.size;
            store.blobs.insert(
                entry.id,
                StoredBlob {
                    id: entry.id,
                    sealed,
                    kind: entry.kind,
                    size: entry.size,
                },
            );
        }
        Ok(store)
    }

    /// Idempotent: identical content yields the same id and is stored once.
    pub fn put_blob(&mut self, sealed: SealedBlob, kind: BlobKind) -> Result<BlobId, StorageError> {
        let bytes = sealed.canonical_bytes();
        let id = sealed.content_id();
        if self.blobs.contains_key(&id) {
            return Ok(id);
        }
        let size = bytes.len() as u64;
        if let Some(cap) = self.capacity {
            if self.used + size > cap {
                return Err(StorageError::StorageFull);
            }
        }
        if let Some(dir) = &self.dir {
            std::fs::write(dir.join(id.to_hex()), &bytes).map_err(io)?;
            let mut manifest = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join("manifest.ndjson"))
                .map_err(io)?;
            let mut line = serde_json::to_vec(&ManifestLine { id, kind, size }).expect("manifest line");
            line.push(b'\n');
            manifest.write_all(&line).map_err(io)?;
        }
        self.used += size;
        self.blobs.insert(
            id,
            StoredBlob {
                id,
                sealed,
                kind,
                size,
            },
        );
        Ok(id)
    }

    pub fn get_blob(&self, id: &BlobId) -> Result<StoredBlob, StorageError> {
        self.blobs.get(id).cloned().ok_or(StorageError::NotFound(*id))
    }

    pub fn has_blob(&self, id: &BlobId) -> bool {
        self.blobs.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredBlob> {
        self.blobs.values()
    }
}
