use std::fs;

use embrec::store::{
    entry_size, store_verify, ActivationStore, CacheKey, DiskStore, MemStore, Mode, StoreError, StoreOptions,
    SHARD_HEADER_LEN,
};
use embrec_core::{ActivationTensor, Dtype, Rng};
use proptest::prelude::*;

fn tensor(seed: u64, s: usize, d: usize) -> ActivationTensor {
    ActivationTensor::random(s, d, -5.0, 5.0, &mut Rng::new(seed)).unwrap()
}

#[test]
fn bert_sized_entry_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F32).unwrap();
    let meta = s.put(CacheKey::new("m", 6, "doc"), &tensor(1, 512, 768)).unwrap();
    assert_eq!(meta.byte_len, 1_572_864);
    assert_eq!(meta.offset, SHARD_HEADER_LEN);
    let shard_len = fs::metadata(dir.path().join(&meta.shard)).unwrap().len();
    assert_eq!(shard_len, SHARD_HEADER_LEN + 1_572_864);
}

#[test]
fn reopened_store_returns_identical_bits() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F32).unwrap();
    let keys: Vec<_> = (0..5).map(|i| CacheKey::new("model", i, format!("doc-{i}"))).collect();
    for (i, k) in keys.iter().enumerate() {
        s.put(k.clone(), &tensor(i as u64, 1 + i, 7)).unwrap();
    }
    drop(s);
    let r = DiskStore::open(dir.path(), Mode::Read).unwrap();
    assert_eq!(r.keys(), keys);
    for (i, k) in keys.iter().enumerate() {
        assert!(r.get(k).unwrap().bit_eq(&tensor(i as u64, 1 + i, 7)));
    }
    assert!(matches!(r.get(&CacheKey::new("model", 9, "nope")), Err(StoreError::NotFound(_))));
}

#[test]
fn duplicate_put_is_rejected_and_leaves_store_intact() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F16).unwrap();
    let key = CacheKey::new("m", 1, "d");
    s.put(key.clone(), &tensor(1, 3, 3)).unwrap();
    assert!(matches!(s.put(key.clone(), &tensor(2, 3, 3)), Err(StoreError::Duplicate(_))));
    drop(s);
    let report = store_verify(dir.path()).unwrap();
    assert_eq!((report.entries, report.ok), (1, 1));
}

#[test]
fn f16_store_is_half_the_size_and_matches_memory_store() {
    let dir = tempfile::tempdir().unwrap();
    let mut disk = DiskStore::create(dir.path(), Dtype::F16).unwrap();
    let mut mem = MemStore::new(Dtype::F16);
    let t = tensor(4, 10, 12);
    let key = CacheKey::new("m", 2, "d");
    let a = disk.put(key.clone(), &t).unwrap();
    let b = mem.put(key.clone(), &t).unwrap();
    assert_eq!(a.byte_len, entry_size(10, 12, Dtype::F32).unwrap() / 2);
    assert_eq!((a.byte_len, a.crc32), (b.byte_len, b.crc32));
    assert!(disk.get(&key).unwrap().bit_eq(&mem.get(&key).unwrap()));
}

#[test]
fn f16_overflow_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F16).unwrap();
    let t = ActivationTensor::new(1, 2, vec![1.0, 70000.0]).unwrap();
    assert!(matches!(s.put(CacheKey::new("m", 1, "big"), &t), Err(StoreError::Invalid(_))));
    assert!(s.is_empty());
}

#[test]
fn truncated_shard_is_reported_not_panicked() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F32).unwrap();
    s.put(CacheKey::new("m", 1, "a"), &tensor(1, 4, 4)).unwrap();
    let last = s.put(CacheKey::new("m", 1, "b"), &tensor(2, 4, 4)).unwrap();
    drop(s);
    let shard = dir.path().join(&last.shard);
    let len = fs::metadata(&shard).unwrap().len();
    fs::OpenOptions::new().write(true).open(&shard).unwrap().set_len(len - 5).unwrap();
    let report = store_verify(dir.path()).unwrap();
    assert_eq!(report.ok, 1);
    assert_eq!(report.corrupted.len(), 1);
    assert_eq!(report.corrupted[0].key, last.key);
    assert!(report.corrupted[0].reason.contains("outside shard"));
}

#[test]
fn flipped_byte_in_each_entry_is_attributed() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F32).unwrap();
    for i in 0..4 {
        s.put(CacheKey::new("m", 1, format!("d{i}")), &tensor(i, 3, 5)).unwrap();
    }
    let entries: Vec<_> = s.entries().cloned().collect();
    drop(s);
    let shard = dir.path().join(&entries[0].shard);
    let pristine = fs::read(&shard).unwrap();
    for meta in &entries {
        let mut bytes = pristine.clone();
        bytes[(meta.offset + meta.byte_len - 1) as usize] ^= 0x80;
        fs::write(&shard, &bytes).unwrap();
        let report = store_verify(dir.path()).unwrap();
        assert_eq!(report.corrupted.len(), 1);
        assert_eq!(report.corrupted[0].key, meta.key);
        assert!(report.corrupted[0].reason.contains("crc32"));
    }
}

#[test]
fn manifest_lines_are_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = DiskStore::create(dir.path(), Dtype::F32).unwrap();
    s.put(CacheKey::new("toy-1", 3, "paper-7"), &tensor(1, 2, 2)).unwrap();
    drop(s);
    let line = fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["model_id"], "toy-1");
    assert_eq!(v["layer"], 3);
    assert_eq!(v["doc_id"], "paper-7");
    assert_eq!(v["dtype"], "f32");
    assert_eq!(v["offset"], 8);
    assert_eq!(v["byte_len"], 16);
    assert_eq!(v["crc32"].as_str().unwrap().len(), 8);
    let info: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("store.json")).unwrap()).unwrap();
    assert_eq!(info["shards"][0], "shard-00000.bin");
}

/// Every indexed entry lies inside its shard, entries in a shard tile it
/// without gaps, and each shard ends exactly where its last entry does.
fn assert_layout_consistent(root: &std::path::Path) {
    let store = DiskStore::open(root, Mode::Read).unwrap();
    for shard in &store.info().shards {
        let mut end = SHARD_HEADER_LEN;
        for meta in store.entries().filter(|m| &m.shard == shard) {
            assert_eq!(meta.offset, end, "{} not contiguous", meta.key);
            assert_eq!(meta.byte_len, entry_size(meta.seq_len, meta.dim, meta.dtype).unwrap());
            end += meta.byte_len;
        }
        assert_eq!(fs::metadata(root.join(shard)).unwrap().len(), end);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn f32_round_trip_is_bit_exact(
        values in prop::collection::vec(-1e30f32..1e30, 1..200),
        dim in 1usize..8,
    ) {
        let s = values.len().div_ceil(dim);
        let mut data = values.clone();
        data.resize(s * dim, -0.0);
        let t = ActivationTensor::new(s, dim, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut store = DiskStore::create(dir.path(), Dtype::F32).unwrap();
        store.put(CacheKey::new("m", 0, "x"), &t).unwrap();
        drop(store);
        let back = DiskStore::open(dir.path(), Mode::Read).unwrap().get(&CacheKey::new("m", 0, "x")).unwrap();
        prop_assert!(back.bit_eq(&t));
    }

    #[test]
    fn shard_layout_stays_consistent(
        shapes in prop::collection::vec((1usize..20, 1usize..12), 1..25),
        max in 64u64..2048,
        dtype in prop_oneof![Just(Dtype::F32), Just(Dtype::F16)],
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = DiskStore::create_with(dir.path(), dtype, StoreOptions { shard_max_bytes: max }).unwrap();
        for (i, (s, d)) in shapes.iter().enumerate() {
            store.put(CacheKey::new("m", 1, format!("d{i}")), &tensor(i as u64, *s, *d)).unwrap();
            let w = store.entries().last().unwrap();
            let fits = w.offset + w.byte_len <= max;
            prop_assert!(fits || w.offset == SHARD_HEADER_LEN, "oversized entry shares a shard");
        }
        drop(store);
        assert_layout_consistent(dir.path());
        prop_assert!(store_verify(dir.path()).unwrap().is_clean());
    }
}
