use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use embrec_core::{checksum, ActivationTensor, Dtype};
use serde::Serialize;

use super::format::{
    shard_name, ShardHeader, StoreInfo, DEFAULT_SHARD_MAX_BYTES, FORMAT_VERSION, LOCK_FILE,
    MANIFEST_FILE, SHARD_HEADER_LEN, STORE_FILE,
};
use super::{ActivationStore, CacheKey, EntryMeta, Result, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Read,
    ReadWrite,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreOptions {
    /// A new shard is started when an append would push the current one past
    /// this size. A single payload larger than this gets a shard of its own.
    pub shard_max_bytes: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self { shard_max_bytes: DEFAULT_SHARD_MAX_BYTES }
    }
}

/// Removes the lock file when the writer goes away.
#[derive(Debug)]
struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Mode(format!(
                "{} is locked by another writer (remove {} if that process is gone)",
                root.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug)]
struct Writer {
    shard: File,
    shard_len: u64,
    manifest: File,
    _lock: LockGuard,
}

/// Append-only activation cache rooted at a directory.
///
/// Any number of read-mode handles may read concurrently; one read-write
/// handle at a time is enforced through the `LOCK` file.
#[derive(Debug)]
pub struct DiskStore {
    root: PathBuf,
    info: StoreInfo,
    mode: Mode,
    index: HashMap<CacheKey, EntryMeta>,
    order: Vec<CacheKey>,
    writer: Option<Writer>,
}

impl DiskStore {
    pub fn create(root: impl AsRef<Path>, dtype: Dtype) -> Result<Self> {
        Self::create_with(root, dtype, StoreOptions::default())
    }

    pub fn create_with(root: impl AsRef<Path>, dtype: Dtype, options: StoreOptions) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if root.join(STORE_FILE).exists() {
            return Err(StoreError::AlreadyExists(root));
        }
        if options.shard_max_bytes <= SHARD_HEADER_LEN {
            return Err(StoreError::Mode(format!(
                "shard_max_bytes must exceed the {SHARD_HEADER_LEN}-byte header"
            )));
        }
        fs::create_dir_all(&root)?;
        let lock = LockGuard::acquire(&root)?;
        let info = StoreInfo {
            version: FORMAT_VERSION,
            dtype,
            shard_max_bytes: options.shard_max_bytes,
            shards: vec![shard_name(0)],
        };
        let shard = new_shard(&root, &info.shards[0], dtype)?;
        let manifest = OpenOptions::new().create(true).append(true).open(root.join(MANIFEST_FILE))?;
        write_info(&root, &info)?;
        log::info!("created {dtype} store at {}", root.display());
        Ok(Self {
            root,
            info,
            mode: Mode::ReadWrite,
            index: HashMap::new(),
            order: Vec::new(),
            writer: Some(Writer { shard, shard_len: SHARD_HEADER_LEN, manifest, _lock: lock }),
        })
    }

    pub fn open(root: impl AsRef<Path>, mode: Mode) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let info_path = root.join(STORE_FILE);
        let info: StoreInfo = match fs::read(&info_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corruption(format!("{}: {e}", info_path.display())))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("no store at {}", root.display())))
            }
            Err(e) => return Err(e.into()),
        };
        if info.version != FORMAT_VERSION {
            return Err(StoreError::Corruption(format!("unsupported store version {}", info.version)));
        }
        if info.shards.is_empty() {
            return Err(StoreError::Corruption("store.json lists no shards".into()));
        }
        let lock = match mode {
            Mode::ReadWrite => Some(LockGuard::acquire(&root)?),
            Mode::Read => None,
        };
        let (entries, good_len) = read_manifest(&root.join(MANIFEST_FILE), &info)?;
        let mut index = HashMap::with_capacity(entries.len());
        let mut order = Vec::with_capacity(entries.len());
        for meta in entries {
            if index.contains_key(&meta.key) {
                return Err(StoreError::Corruption(format!("manifest lists {} twice", meta.key)));
            }
            order.push(meta.key.clone());
            index.insert(meta.key.clone(), meta);
        }

        let writer = match lock {
            None => None,
            Some(lock) => {
                let manifest_path = root.join(MANIFEST_FILE);
                let manifest = OpenOptions::new().create(true).append(true).open(&manifest_path)?;
                if manifest.metadata()?.len() > good_len {
                    log::info!("dropping torn manifest tail in {}", manifest_path.display());
                    manifest.set_len(good_len)?;
                }
                let last = info.shards.last().expect("checked non-empty");
                let expected = order
                    .iter()
                    .map(|k| &index[k])
                    .filter(|m| &m.shard == last)
                    .map(|m| m.offset + m.byte_len)
                    .max()
                    .unwrap_or(SHARD_HEADER_LEN);
                let shard = OpenOptions::new().read(true).append(true).open(root.join(last))?;
                let actual = shard.metadata()?.len();
                if actual < expected {
                    return Err(StoreError::Corruption(format!(
                        "shard {last} is {actual} bytes but the manifest needs {expected}"
                    )));
                }
                if actual > expected {
                    // payload written but never indexed
                    log::info!("truncating {} unindexed bytes from {last}", actual - expected);
                    shard.set_len(expected)?;
                }
                Some(Writer { shard, shard_len: expected, manifest, _lock: lock })
            }
        };
        Ok(Self { root, info, mode, index, order, writer })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn info(&self) -> &StoreInfo {
        &self.info
    }

    pub fn entries(&self) -> impl Iterator<Item = &EntryMeta> {
        self.order.iter().map(|k| &self.index[k])
    }

    /// Flushes shard and manifest to stable storage.
    pub fn sync(&self) -> Result<()> {
        if let Some(w) = &self.writer {
            w.shard.sync_data()?;
            w.manifest.sync_data()?;
        }
        Ok(())
    }

    fn read_payload(&self, meta: &EntryMeta) -> Result<Vec<u8>> {
        let path = self.root.join(&meta.shard);
        let mut f = File::open(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::Corruption(format!("shard {} is missing", meta.shard)),
            _ => e.into(),
        })?;
        let len = f.metadata()?.len();
        let end = meta.offset.checked_add(meta.byte_len);
        if meta.offset < SHARD_HEADER_LEN || end.map_or(true, |end| end > len) {
            return Err(StoreError::Corruption(format!(
                "{}: bytes {}..+{} are outside shard {} ({len} bytes)",
                meta.key, meta.offset, meta.byte_len, meta.shard
            )));
        }
        let mut header = [0u8; SHARD_HEADER_LEN as usize];
        f.read_exact(&mut header)?;
        let header = ShardHeader::parse(&header)?;
        if header.dtype != meta.dtype {
            return Err(StoreError::Corruption(format!(
                "{}: shard dtype {} but entry dtype {}",
                meta.key, header.dtype, meta.dtype
            )));
        }
        f.seek(SeekFrom::Start(meta.offset))?;
        let mut buf = vec![0u8; meta.byte_len as usize];
        f.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn roll_shard(&mut self) -> Result<()> {
        let name = shard_name(self.info.shards.len());
        let shard = new_shard(&self.root, &name, self.info.dtype)?;
        self.info.shards.push(name);
        write_info(&self.root, &self.info)?;
        let w = self.writer.as_mut().expect("caller checked mode");
        w.shard = shard;
        w.shard_len = SHARD_HEADER_LEN;
        Ok(())
    }
}

impl ActivationStore for DiskStore {
    fn dtype(&self) -> Dtype {
        self.info.dtype
    }

    fn put(&mut self, key: CacheKey, tensor: &ActivationTensor) -> Result<EntryMeta> {
        if self.writer.is_none() {
            return Err(StoreError::Mode(format!("{} is open read-only", self.root.display())));
        }
        if self.index.contains_key(&key) {
            return Err(StoreError::Duplicate(key));
        }
        let dtype = self.info.dtype;
        let payload = tensor.encode(dtype)?;
        let byte_len = payload.len() as u64;
        let current = self.writer.as_ref().map_or(0, |w| w.shard_len);
        if current > SHARD_HEADER_LEN && current + byte_len > self.info.shard_max_bytes {
            self.roll_shard()?;
        }
        let shard = self.info.shards.last().cloned().expect("at least one shard");
        let w = self.writer.as_mut().expect("checked above");
        let meta = EntryMeta {
            key,
            seq_len: tensor.seq_len(),
            dim: tensor.dim(),
            dtype,
            shard,
            offset: w.shard_len,
            byte_len,
            crc32: checksum(&payload),
        };
        w.shard.write_all(&payload)?;
        w.shard_len += byte_len;
        let mut line = serde_json::to_vec(&meta).expect("EntryMeta serializes");
        line.push(b'\n');
        w.manifest.write_all(&line)?;
        log::debug!("put {} ({} bytes at {}:{})", meta.key, byte_len, meta.shard, meta.offset);
        self.order.push(meta.key.clone());
        self.index.insert(meta.key.clone(), meta.clone());
        Ok(meta)
    }

    fn get(&self, key: &CacheKey) -> Result<ActivationTensor> {
        let meta = self.index.get(key).ok_or_else(|| StoreError::NotFound(key.to_string()))?;
        let payload = self.read_payload(meta)?;
        let crc = checksum(&payload);
        if crc != meta.crc32 {
            return Err(StoreError::Corruption(format!(
                "{key}: crc32 {crc:08x} != manifest {:08x}",
                meta.crc32
            )));
        }
        ActivationTensor::decode(meta.seq_len, meta.dim, meta.dtype, &payload)
            .map_err(|e| StoreError::Corruption(format!("{key}: {e}")))
    }

    fn meta(&self, key: &CacheKey) -> Option<EntryMeta> {
        self.index.get(key).cloned()
    }

    fn keys(&self) -> Vec<CacheKey> {
        self.order.clone()
    }

    fn len(&self) -> usize {
        self.order.len()
    }
}

fn new_shard(root: &Path, name: &str, dtype: Dtype) -> Result<File> {
    let mut f = OpenOptions::new().create_new(true).read(true).append(true).open(root.join(name))?;
    f.write_all(&ShardHeader { version: FORMAT_VERSION, dtype }.to_bytes())?;
    Ok(f)
}

fn write_info(root: &Path, info: &StoreInfo) -> Result<()> {
    let tmp = root.join(format!("{STORE_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_vec_pretty(info).expect("StoreInfo serializes"))?;
    fs::rename(tmp, root.join(STORE_FILE))?;
    Ok(())
}

/// Parses the manifest, returning entries and the byte length of the intact
/// prefix. A final line without a newline that fails to parse is a torn
/// append and is dropped; any other bad line is corruption.
fn read_manifest(path: &Path, info: &StoreInfo) -> Result<(Vec<EntryMeta>, u64)> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut entries = Vec::new();
    let mut good = 0usize;
    let mut rest = &bytes[..];
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let (line, terminated) = match rest.iter().position(|&b| b == b'\n') {
            Some(i) => (&rest[..i], true),
            None => (rest, false),
        };
        let consumed = line.len() + usize::from(terminated);
        if line.iter().all(u8::is_ascii_whitespace) {
            rest = &rest[consumed..];
            good += consumed;
            continue;
        }
        match serde_json::from_slice::<EntryMeta>(line) {
            Ok(meta) if terminated => {
                if !info.shards.contains(&meta.shard) {
                    return Err(StoreError::Corruption(format!(
                        "manifest line {line_no} references unknown shard {}",
                        meta.shard
                    )));
                }
                if meta.dtype != info.dtype {
                    return Err(StoreError::Corruption(format!(
                        "manifest line {line_no} has dtype {} in a {} store",
                        meta.dtype, info.dtype
                    )));
                }
                let expected = embrec_core::entry_size(meta.seq_len, meta.dim, meta.dtype)
                    .map_err(|e| StoreError::Corruption(format!("manifest line {line_no}: {e}")))?;
                if expected != meta.byte_len {
                    return Err(StoreError::Corruption(format!(
                        "manifest line {line_no}: byte_len {} != {expected}",
                        meta.byte_len
                    )));
                }
                entries.push(meta);
                good += consumed;
            }
            _ if !terminated => {
                log::info!("ignoring torn final manifest line {line_no}");
                break;
            }
            Ok(_) => unreachable!("terminated lines are handled above"),
            Err(e) => {
                return Err(StoreError::Corruption(format!("manifest line {line_no}: {e}")));
            }
        }
        rest = &rest[consumed..];
    }
    Ok((entries, good as u64))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Corrupted {
    pub key: CacheKey,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub entries: usize,
    pub ok: usize,
    pub corrupted: Vec<Corrupted>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.corrupted.is_empty()
    }
}

/// Reads and checksums every manifest entry of the store at `root`.
pub fn store_verify(root: impl AsRef<Path>) -> Result<VerifyReport> {
    let store = DiskStore::open(root, Mode::Read)?;
    let mut report = VerifyReport { entries: store.len(), ok: 0, corrupted: Vec::new() };
    for key in &store.order {
        match store.get(key) {
            Ok(_) => report.ok += 1,
            Err(e) => report.corrupted.push(Corrupted { key: key.clone(), reason: e.to_string() }),
        }
    }
    Ok(report)
}
