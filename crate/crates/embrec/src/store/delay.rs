use std::thread;
use std::time::Duration;

use embrec_core::{ActivationTensor, Dtype};

use super::{ActivationStore, CacheKey, EntryMeta, Result};

/// Wraps a store and sleeps before every `get`, to emulate slow storage.
#[derive(Debug)]
pub struct SlowReads<S> {
    inner: S,
    delay: Duration,
}

impl<S> SlowReads<S> {
    pub fn new(inner: S, delay: Duration) -> Self {
        Self { inner, delay }
    }

    pub fn delay(&self) -> Duration {
        self.delay
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: ActivationStore> ActivationStore for SlowReads<S> {
    fn dtype(&self) -> Dtype {
        self.inner.dtype()
    }

    fn put(&mut self, key: CacheKey, tensor: &ActivationTensor) -> Result<EntryMeta> {
        self.inner.put(key, tensor)
    }

    fn get(&self, key: &CacheKey) -> Result<ActivationTensor> {
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        self.inner.get(key)
    }

    fn meta(&self, key: &CacheKey) -> Option<EntryMeta> {
        self.inner.meta(key)
    }

    fn keys(&self) -> Vec<CacheKey> {
        self.inner.keys()
    }

    fn len(&self) -> usize {
        self.inner.len()
    }
}
