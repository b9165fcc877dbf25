use embrec_core::Dtype;
use serde::{Deserialize, Serialize};

use super::{Result, StoreError};

pub const SHARD_MAGIC: [u8; 4] = *b"ERCS";
pub const FORMAT_VERSION: u16 = 1;
pub const SHARD_HEADER_LEN: u64 = 8;
pub const DEFAULT_SHARD_MAX_BYTES: u64 = 256 * 1024 * 1024;

pub const STORE_FILE: &str = "store.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LOCK_FILE: &str = "LOCK";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardHeader {
    pub version: u16,
    pub dtype: Dtype,
}

impl ShardHeader {
    pub fn to_bytes(self) -> [u8; SHARD_HEADER_LEN as usize] {
        let v = self.version.to_le_bytes();
        [SHARD_MAGIC[0], SHARD_MAGIC[1], SHARD_MAGIC[2], SHARD_MAGIC[3], v[0], v[1], self.dtype.code(), 0]
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SHARD_HEADER_LEN as usize || bytes[..4] != SHARD_MAGIC {
            return Err(StoreError::Corruption("bad shard magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(StoreError::Corruption(format!("unsupported shard version {version}")));
        }
        let dtype = Dtype::from_code(bytes[6])
            .map_err(|e| StoreError::Corruption(format!("shard header: {e}")))?;
        Ok(Self { version, dtype })
    }
}

/// Contents of `store.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreInfo {
    pub version: u16,
    pub dtype: Dtype,
    pub shard_max_bytes: u64,
    pub shards: Vec<String>,
}

pub fn shard_name(index: usize) -> String {
    format!("shard-{index:05}.bin")
}
