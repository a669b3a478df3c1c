//! Content-addressed, deduplicating block store.
//!
//! Blocks are keyed by the SHA-256 [`Cid`] of their bytes. The store keeps a
//! pin set (pinned blocks are never evicted) and distinguishes local-origin
//! blocks (the user's own data, never evicted) from replicated ones, which
//! are subject to LRU eviction via [`ContentStore::evict_unpinned`].
//!
//! Two backends share the same semantics: a pure in-memory map (used by the
//! simulator and tests) and an on-disk layout of one file per block under a
//! two-level hex prefix (`<root>/blocks/<hex[0..2]>/<hex>.blk`) plus a pin
//! manifest (`<root>/pins.json`). Disk writes go through a temp file and an
//! atomic rename, and every disk read re-hashes the bytes so corruption is
//! surfaced as `NotFound` instead of corrupt data.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bytes::Bytes;
use thiserror::Error;

use crate::cid::Cid;

/// Default upper bound on a single block. Performance records average ~9 KB,
/// so one record always fits in one block and no chunking layer is needed.
pub const DEFAULT_MAX_BLOCK_SIZE: usize = 1024 * 1024;

/// Where a block came from. Local-origin blocks are never evicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOrigin {
    /// Created by this node (own contributions, private data).
    Local,
    /// Received from a peer.
    Replicated,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("block of {got} bytes exceeds max block size {max}")]
    BlockTooLarge { got: usize, max: usize },
    #[error("block {0} not found")]
    NotFound(Cid),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone)]
struct BlockMeta {
    len: usize,
    pinned: bool,
    origin: BlockOrigin,
    /// Monotonic access counter value of the most recent read or write.
    last_access: u64,
}

#[derive(Debug, Clone)]
enum Backend {
    Memory(BTreeMap<Cid, Bytes>),
    Disk { root: PathBuf },
}

/// Content-addressed block store with pinning and LRU eviction.
#[derive(Debug, Clone)]
pub struct ContentStore {
    backend: Backend,
    index: BTreeMap<Cid, BlockMeta>,
    max_block_size: usize,
    access_clock: u64,
    total_bytes: u64,
}

impl ContentStore {
    /// A store that keeps everything in memory.
    pub fn in_memory() -> Self {
        ContentStore {
            backend: Backend::Memory(BTreeMap::new()),
            index: BTreeMap::new(),
            max_block_size: DEFAULT_MAX_BLOCK_SIZE,
            access_clock: 0,
            total_bytes: 0,
        }
    }

    /// Open (or create) a disk-backed store under `root`.
    ///
    /// Re-indexes existing blocks, loads the pin manifest, and removes any
    /// leftover temp files from interrupted writes.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let blocks_dir = root.join("blocks");
        fs::create_dir_all(&blocks_dir)?;

        let pins = load_pins(&root)?;
        let mut index = BTreeMap::new();
        let mut total_bytes = 0u64;
        for prefix in fs::read_dir(&blocks_dir)? {
            let prefix = prefix?;
            if !prefix.file_type()?.is_dir() {
                continue;
            }
            for entry in fs::read_dir(prefix.path())? {
                let entry = entry?;
                let path = entry.path();
                let name = entry.file_name().to_string_lossy().into_owned();
                if name.ends_with(".tmp") {
                    // Torn write from a crash; the block was never committed.
                    let _ = fs::remove_file(&path);
                    continue;
                }
                let Some(hex_part) = name.strip_suffix(".blk") else {
                    continue;
                };
                let Ok(cid) = format!("c1:{hex_part}").parse::<Cid>() else {
                    log::warn!("ignoring unrecognized file in block store: {name}");
                    continue;
                };
                let len = entry.metadata()?.len() as usize;
                total_bytes += len as u64;
                index.insert(
                    cid,
                    BlockMeta {
                        len,
                        pinned: pins.contains(&cid),
                        // Origin is not persisted; after a restart only the pin
                        // flag decides evictability, which keeps local-origin
                        // blocks safe because they are pinned at creation.
                        origin: BlockOrigin::Replicated,
                        last_access: 0,
                    },
                );
            }
        }
        Ok(ContentStore {
            backend: Backend::Disk { root },
            index,
            max_block_size: DEFAULT_MAX_BLOCK_SIZE,
            access_clock: 0,
            total_bytes,
        })
    }

    pub fn with_max_block_size(mut self, max: usize) -> Self {
        self.max_block_size = max;
        self
    }

    pub fn max_block_size(&self) -> usize {
        self.max_block_size
    }

    /// Store `bytes` and return their [`Cid`]. Storing identical bytes twice
    /// is a no-op returning the same identifier (deduplication). Local-origin
    /// blocks are pinned on creation so garbage collection can never drop a
    /// peer's own data.
    pub fn put_block(&mut self, bytes: Bytes, origin: BlockOrigin) -> Result<Cid, StoreError> {
        if bytes.len() > self.max_block_size {
            return Err(StoreError::BlockTooLarge {
                got: bytes.len(),
                max: self.max_block_size,
            });
        }
        let cid = Cid::for_bytes(&bytes);
        self.access_clock += 1;
        if let Some(meta) = self.index.get_mut(&cid) {
            meta.last_access = self.access_clock;
            if origin == BlockOrigin::Local {
                // Re-publishing data we previously only replicated upgrades it
                // to own data: it must survive eviction from now on.
                meta.origin = BlockOrigin::Local;
                if !meta.pinned {
                    meta.pinned = true;
                    self.persist_pins()?;
                }
            }
            return Ok(cid);
        }

        match &mut self.backend {
            Backend::Memory(map) => {
                map.insert(cid, bytes.clone());
            }
            Backend::Disk { root } => {
                write_block_file(root, &cid, &bytes)?;
            }
        }
        let pinned = origin == BlockOrigin::Local;
        self.total_bytes += bytes.len() as u64;
        self.index.insert(
            cid,
            BlockMeta {
                len: bytes.len(),
                pinned,
                origin,
                last_access: self.access_clock,
            },
        );
        if pinned {
            self.persist_pins()?;
        }
        Ok(cid)
    }

    /// Fetch the bytes stored under `cid`.
    ///
    /// Never returns bytes whose hash does not match `cid`: a corrupted
    /// on-disk block is reported as `NotFound` and logged.
    pub fn get_block(&mut self, cid: &Cid) -> Result<Bytes, StoreError> {
        if !self.index.contains_key(cid) {
            return Err(StoreError::NotFound(*cid));
        }
        let bytes = match &self.backend {
            Backend::Memory(map) => map.get(cid).cloned().ok_or(StoreError::NotFound(*cid))?,
            Backend::Disk { root } => {
                let bytes = match fs::read(block_path(root, cid)) {
                    Ok(b) => Bytes::from(b),
                    Err(_) => return Err(StoreError::NotFound(*cid)),
                };
                if !cid.matches(&bytes) {
                    log::error!("integrity failure reading {cid}: stored bytes do not match digest");
                    return Err(StoreError::NotFound(*cid));
                }
                bytes
            }
        };
        self.access_clock += 1;
        if let Some(meta) = self.index.get_mut(cid) {
            meta.last_access = self.access_clock;
        }
        Ok(bytes)
    }

    /// True iff `bytes` hash to `cid`.
    pub fn verify(cid: &Cid, bytes: &[u8]) -> bool {
        cid.matches(bytes)
    }

    pub fn contains(&self, cid: &Cid) -> bool {
        self.index.contains_key(cid)
    }

    pub fn is_pinned(&self, cid: &Cid) -> bool {
        self.index.get(cid).map(|m| m.pinned).unwrap_or(false)
    }

    /// Pin or unpin a block. Pinned blocks survive [`Self::evict_unpinned`].
    pub fn set_pin(&mut self, cid: &Cid, pinned: bool) -> Result<(), StoreError> {
        let meta = self.index.get_mut(cid).ok_or(StoreError::NotFound(*cid))?;
        if meta.pinned != pinned {
            meta.pinned = pinned;
            self.persist_pins()?;
        }
        Ok(())
    }

    /// Evict oldest-access unpinned replicated blocks until the store holds
    /// at most `target_bytes`, or nothing evictable remains. Pinned and
    /// local-origin blocks are never touched. Returns the evicted cids.
    pub fn evict_unpinned(&mut self, target_bytes: u64) -> Vec<Cid> {
        let mut candidates: Vec<(u64, Cid, usize)> = self
            .index
            .iter()
            .filter(|(_, m)| !m.pinned && m.origin == BlockOrigin::Replicated)
            .map(|(cid, m)| (m.last_access, *cid, m.len))
            .collect();
        candidates.sort();

        let mut evicted = Vec::new();
        for (_, cid, len) in candidates {
            if self.total_bytes <= target_bytes {
                break;
            }
            match &mut self.backend {
                Backend::Memory(map) => {
                    map.remove(&cid);
                }
                Backend::Disk { root } => {
                    if let Err(e) = fs::remove_file(block_path(root, &cid)) {
                        log::warn!("failed to evict {cid}: {e}");
                        continue;
                    }
                }
            }
            self.index.remove(&cid);
            self.total_bytes -= len as u64;
            evicted.push(cid);
        }
        evicted
    }

    pub fn block_len(&self, cid: &Cid) -> Option<usize> {
        self.index.get(cid).map(|m| m.len)
    }

    pub fn block_count(&self) -> usize {
        self.index.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    /// Cids of all stored blocks, ascending.
    pub fn list(&self) -> impl Iterator<Item = &Cid> {
        self.index.keys()
    }

    fn persist_pins(&self) -> Result<(), StoreError> {
        if let Backend::Disk { root } = &self.backend {
            let pins: Vec<String> = self
                .index
                .iter()
                .filter(|(_, m)| m.pinned)
                .map(|(cid, _)| cid.to_string())
                .collect();
            let body = serde_json::to_string(&pins).expect("pin list serializes");
            write_atomic(&root.join("pins.json"), body.as_bytes())?;
        }
        Ok(())
    }
}

fn block_path(root: &Path, cid: &Cid) -> PathBuf {
    let hex = hex::encode(cid.digest());
    root.join("blocks").join(&hex[..2]).join(format!("{hex}.blk"))
}

fn write_block_file(root: &Path, cid: &Cid, bytes: &[u8]) -> Result<(), StoreError> {
    let path = block_path(root, cid);
    fs::create_dir_all(path.parent().expect("block path has parent"))?;
    write_atomic(&path, bytes)
}

/// Write-to-temp-then-rename so readers never observe a half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_pins(root: &Path) -> Result<BTreeSet<Cid>, StoreError> {
    let path = root.join("pins.json");
    if !path.exists() {
        return Ok(BTreeSet::new());
    }
    let body = fs::read_to_string(&path)?;
    let texts: Vec<String> = serde_json::from_str(&body)
        .map_err(|e| StoreError::Io(format!("pins.json unreadable: {e}")))?;
    let mut pins = BTreeSet::new();
    for t in texts {
        match t.parse::<Cid>() {
            Ok(cid) => {
                pins.insert(cid);
            }
            Err(e) => log::warn!("ignoring bad pin entry {t:?}: {e}"),
        }
    }
    Ok(pins)
}
