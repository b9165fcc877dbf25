//! On-disk and in-memory activation caches.
//!
//! Layout of a disk store root:
//!
//! ```text
//! store.json          {"version":1,"dtype":"f32","shard_max_bytes":..,"shards":[..]}
//! manifest.jsonl      one EntryMeta object per line
//! shard-00000.bin     "ERCS" | version u16 LE | dtype u8 | reserved u8 | payloads...
//! LOCK                present while a read-write handle is open
//! ```
//!
//! Payloads are little-endian, row-major, in the store's dtype, with no
//! padding between them.

mod delay;
mod disk;
mod format;
mod mem;
mod prefetch;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use embrec_core::{ActivationTensor, Dtype};
use serde::{Deserialize, Serialize};

pub use delay::SlowReads;
pub use disk::{store_verify, Corrupted, DiskStore, Mode, StoreOptions, VerifyReport};
pub use embrec_core::entry_size;
pub use format::{ShardHeader, StoreInfo, DEFAULT_SHARD_MAX_BYTES, FORMAT_VERSION, SHARD_HEADER_LEN};
pub use mem::MemStore;
pub use prefetch::{prefetch_iter, Prefetch};

/// Identity of one cached activation. Matching is exact on all three fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub model_id: String,
    pub layer: usize,
    pub doc_id: String,
}

impl CacheKey {
    pub fn new(model_id: impl Into<String>, layer: usize, doc_id: impl Into<String>) -> Self {
        Self { model_id: model_id.into(), layer, doc_id: doc_id.into() }
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.model_id, self.layer, self.doc_id)
    }
}

/// Where an entry lives and how to check it. Serialized as one manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMeta {
    #[serde(flatten)]
    pub key: CacheKey,
    pub seq_len: usize,
    pub dim: usize,
    pub dtype: Dtype,
    pub shard: String,
    pub offset: u64,
    pub byte_len: u64,
    #[serde(with = "crc_hex")]
    pub crc32: u32,
}

mod crc_hex {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(crc: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{crc:08x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 8 {
            return Err(D::Error::custom(format!("crc32 must be 8 hex digits, got {s:?}")));
        }
        u32::from_str_radix(&s, 16).map_err(D::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("a store already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("duplicate key {0}")]
    Duplicate(CacheKey),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("corruption: {0}")]
    Corruption(String),
    #[error("invalid: {0}")]
    Invalid(#[from] embrec_core::Error),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// Common surface of the disk and memory caches.
pub trait ActivationStore: Send + Sync {
    fn dtype(&self) -> Dtype;

    /// Appends `tensor` under `key`, converting to the store dtype.
    fn put(&mut self, key: CacheKey, tensor: &ActivationTensor) -> Result<EntryMeta>;

    /// Reads, verifies and widens the entry for `key` to `f32`.
    fn get(&self, key: &CacheKey) -> Result<ActivationTensor>;

    fn meta(&self, key: &CacheKey) -> Option<EntryMeta>;

    /// Keys in insertion order.
    fn keys(&self) -> Vec<CacheKey>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn contains(&self, key: &CacheKey) -> bool {
        self.meta(key).is_some()
    }
}

/// Shared handles read through to the store; writing needs the only handle.
impl<S: ActivationStore + ?Sized> ActivationStore for Arc<S> {
    fn dtype(&self) -> Dtype {
        (**self).dtype()
    }

    fn put(&mut self, key: CacheKey, tensor: &ActivationTensor) -> Result<EntryMeta> {
        match Arc::get_mut(self) {
            Some(store) => store.put(key, tensor),
            None => Err(StoreError::Mode("cannot write through a shared store handle".into())),
        }
    }

    fn get(&self, key: &CacheKey) -> Result<ActivationTensor> {
        (**self).get(key)
    }

    fn meta(&self, key: &CacheKey) -> Option<EntryMeta> {
        (**self).meta(key)
    }

    fn keys(&self) -> Vec<CacheKey> {
        (**self).keys()
    }

    fn len(&self) -> usize {
        (**self).len()
    }
}
