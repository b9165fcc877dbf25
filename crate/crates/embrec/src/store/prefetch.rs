use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};

use embrec_core::ActivationTensor;

use super::{ActivationStore, CacheKey, Result};

type Item = Result<(CacheKey, ActivationTensor)>;

#[derive(Default)]
struct State {
    buf: VecDeque<Item>,
    in_flight: bool,
    done: bool,
    cancelled: bool,
    high_water: usize,
}

#[derive(Default)]
struct Shared {
    state: Mutex<State>,
    ready: Condvar,
    space: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        // a panicking reader leaves no invariant half-updated
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Iterator over store entries that reads up to `depth` entries ahead on a
/// background thread.
///
/// Yields entries in key order. An error is yielded at the position of the
/// failing key and ends the iteration. Dropping the iterator early stops the
/// reader.
pub struct Prefetch<S: ActivationStore + ?Sized + 'static> {
    store: Arc<S>,
    keys: Vec<CacheKey>,
    pos: usize,
    finished: bool,
    depth: usize,
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

/// Starts reading `keys` from `store`. With `depth == 0` every read happens
/// inside `next`. Depth is clamped to the number of keys.
pub fn prefetch_iter<S>(store: Arc<S>, keys: Vec<CacheKey>, depth: usize) -> Prefetch<S>
where
    S: ActivationStore + ?Sized + 'static,
{
    let depth = depth.min(keys.len());
    let shared = Arc::new(Shared::default());
    let worker = (depth > 0).then(|| {
        let store = Arc::clone(&store);
        let shared = Arc::clone(&shared);
        let keys = keys.clone();
        thread::Builder::new()
            .name("embrec-prefetch".into())
            .spawn(move || read_ahead(&*store, &keys, depth, &shared))
            .expect("spawn prefetch thread")
    });
    Prefetch { store, keys, pos: 0, finished: false, depth, shared, worker }
}

fn read_ahead<S: ActivationStore + ?Sized>(store: &S, keys: &[CacheKey], depth: usize, shared: &Shared) {
    for key in keys {
        let mut st = shared.lock();
        while !st.cancelled && st.buf.len() >= depth {
            st = shared.space.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        if st.cancelled {
            break;
        }
        st.in_flight = true;
        drop(st);

        let item = store.get(key).map(|t| (key.clone(), t));
        let failed = item.is_err();

        let mut st = shared.lock();
        st.in_flight = false;
        st.buf.push_back(item);
        st.high_water = st.high_water.max(st.buf.len());
        drop(st);
        shared.ready.notify_one();
        if failed {
            break;
        }
    }
    shared.lock().done = true;
    shared.ready.notify_all();
}

impl<S: ActivationStore + ?Sized + 'static> Prefetch<S> {
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Largest number of finished reads that were waiting in the buffer at
    /// once. Never exceeds `depth`.
    pub fn high_water(&self) -> usize {
        self.shared.lock().high_water
    }

    fn stop(&mut self) {
        self.shared.lock().cancelled = true;
        self.shared.space.notify_all();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl<S: ActivationStore + ?Sized + 'static> Iterator for Prefetch<S> {
    type Item = Item;

    fn next(&mut self) -> Option<Item> {
        if self.finished || self.pos >= self.keys.len() {
            return None;
        }
        let item = if self.worker.is_none() {
            let key = &self.keys[self.pos];
            self.store.get(key).map(|t| (key.clone(), t))
        } else {
            let mut st = self.shared.lock();
            loop {
                if let Some(item) = st.buf.pop_front() {
                    break item;
                }
                if st.done {
                    drop(st);
                    self.finished = true;
                    return None;
                }
                st = self.shared.ready.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        };
        self.shared.space.notify_one();
        self.pos += 1;
        if item.is_err() {
            self.finished = true;
            self.stop();
        }
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = if self.finished { 0 } else { self.keys.len() - self.pos };
        (0, Some(left))
    }
}

impl<S: ActivationStore + ?Sized + 'static> Drop for Prefetch<S> {
    fn drop(&mut self) {
        self.stop();
    }
}
