use std::collections::HashMap;

use embrec_core::{checksum, ActivationTensor, Dtype};

use super::{ActivationStore, CacheKey, EntryMeta, Result, StoreError};

const MEMORY_SHARD: &str = "<memory>";

/// Activation cache held in RAM.
///
/// Tensors are stored already rounded to the store dtype, so `get` returns
/// exactly what a disk store of the same dtype would.
#[derive(Debug, Clone)]
pub struct MemStore {
    dtype: Dtype,
    entries: HashMap<CacheKey, (EntryMeta, ActivationTensor)>,
    order: Vec<CacheKey>,
    next_offset: u64,
}

impl MemStore {
    pub fn new(dtype: Dtype) -> Self {
        Self { dtype, entries: HashMap::new(), order: Vec::new(), next_offset: 0 }
    }

    /// Copies `keys` out of another store.
    pub fn load_from<S: ActivationStore + ?Sized>(source: &S, keys: &[CacheKey]) -> Result<Self> {
        let mut out = Self::new(source.dtype());
        for key in keys {
            let t = source.get(key)?;
            out.put(key.clone(), &t)?;
        }
        Ok(out)
    }

    /// Total payload bytes, as they would be laid out on disk.
    pub fn payload_bytes(&self) -> u64 {
        self.next_offset
    }
}

impl ActivationStore for MemStore {
    fn dtype(&self) -> Dtype {
        self.dtype
    }

    fn put(&mut self, key: CacheKey, tensor: &ActivationTensor) -> Result<EntryMeta> {
        if self.entries.contains_key(&key) {
            return Err(StoreError::Duplicate(key));
        }
        let payload = tensor.encode(self.dtype)?;
        let stored = ActivationTensor::decode(tensor.seq_len(), tensor.dim(), self.dtype, &payload)?;
        let meta = EntryMeta {
            key: key.clone(),
            seq_len: tensor.seq_len(),
            dim: tensor.dim(),
            dtype: self.dtype,
            shard: MEMORY_SHARD.to_string(),
            offset: self.next_offset,
            byte_len: payload.len() as u64,
            crc32: checksum(&payload),
        };
        self.next_offset += meta.byte_len;
        self.order.push(key.clone());
        self.entries.insert(key, (meta.clone(), stored));
        Ok(meta)
    }

    fn get(&self, key: &CacheKey) -> Result<ActivationTensor> {
        self.entries
            .get(key)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| StoreError::NotFound(key.to_string()))
    }

    fn meta(&self, key: &CacheKey) -> Option<EntryMeta> {
        self.entries.get(key).map(|(m, _)| m.clone())
    }

    fn keys(&self) -> Vec<CacheKey> {
        self.order.clone()
    }

    fn len(&self) -> usize {
        self.order.len()
    }
}
