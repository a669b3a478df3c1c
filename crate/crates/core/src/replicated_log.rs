//! Append-only replicated log: an operation-based CRDT.
//!
//! Entries form a Merkle DAG: each entry references the author's view of the
//! current heads as parents, carries a Lamport clock, and is identified by
//! the hash of its canonical encoding. Joining entry sets from other
//! replicas is commutative, associative and idempotent, so replicas that see
//! the same entries converge regardless of delivery order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::cid::Cid;
use crate::content_store::{ContentStore, StoreError};
use crate::peer_protocol::PeerId;

/// The single global contributions log shared by the whole network.
pub const CONTRIBUTIONS_LOG_ID: &str = "contributions/v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogError {
    #[error("payload block {0} not present in content store")]
    PayloadMissing(Cid),
    #[error("entry {0} failed integrity verification")]
    IntegrityFailure(Cid),
    #[error("entry {0} references a parent that cannot be resolved")]
    DanglingParent(Cid),
    #[error("entry {entry} belongs to log {got:?}, expected {expected:?}")]
    WrongLog { entry: Cid, got: String, expected: String },
    #[error("entry {0} is not valid canonical encoding")]
    Undecodable(Cid),
}

/// The hashed portion of an entry. Field names sort alphabetically in the
/// canonical encoding, which is what gets hashed and sent on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EntryBody {
    author: PeerId,
    clock: u64,
    log_id: String,
    parents: Vec<Cid>,
    payload_cid: Cid,
}

/// One immutable node of the log DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    id: Cid,
    body: EntryBody,
}

impl LogEntry {
    fn from_body(body: EntryBody) -> Self {
        let bytes = to_canonical_bytes(&body).expect("entry body always encodes");
        LogEntry { id: Cid::for_bytes(&bytes), body }
    }

    pub fn id(&self) -> Cid {
        self.id
    }

    pub fn log_id(&self) -> &str {
        &self.body.log_id
    }

    pub fn author(&self) -> &PeerId {
        &self.body.author
    }

    pub fn clock(&self) -> u64 {
        self.body.clock
    }

    pub fn parents(&self) -> &[Cid] {
        &self.body.parents
    }

    pub fn payload_cid(&self) -> Cid {
        self.body.payload_cid
    }

    /// Canonical encoding: the bytes whose hash is the entry id. This is
    /// also how entries travel in `ENTRIES` messages and persist as blocks.
    pub fn canonical_encoding(&self) -> String {
        String::from_utf8(to_canonical_bytes(&self.body).expect("entry body always encodes"))
            .expect("canonical encoding is utf-8")
    }

    /// Decode a canonical encoding. Recomputes the id from the bytes, so a
    /// tampered encoding yields a different id than the sender claimed.
    pub fn decode(encoding: &str) -> Result<LogEntry, serde_json::Error> {
        let body: EntryBody = serde_json::from_str(encoding)?;
        Ok(LogEntry::from_body(body))
    }

    /// Structural invariants that do not need the rest of the DAG: parents
    /// sorted ascending with no duplicates, and the encoding re-hashes to
    /// the id.
    fn structurally_valid(&self) -> bool {
        let sorted = self.body.parents.windows(2).all(|w| w[0] < w[1]);
        let bytes = to_canonical_bytes(&self.body).expect("entry body always encodes");
        sorted && Cid::for_bytes(&bytes) == self.id
    }
}

/// A replica's view of one log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Log {
    log_id: String,
    entries: BTreeMap<Cid, LogEntry>,
    heads: BTreeSet<Cid>,
}

impl Log {
    pub fn new(log_id: impl Into<String>) -> Self {
        Log { log_id: log_id.into(), entries: BTreeMap::new(), heads: BTreeSet::new() }
    }

    pub fn log_id(&self) -> &str {
        &self.log_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn heads(&self) -> &BTreeSet<Cid> {
        &self.heads
    }

    pub fn contains(&self, id: &Cid) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &Cid) -> Option<&LogEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.values()
    }

    /// Append a new entry authored by this node. The payload must already be
    /// in the content store; the new entry's parents are the current heads.
    pub fn append(
        &mut self,
        author: PeerId,
        payload_cid: Cid,
        store: &ContentStore,
    ) -> Result<LogEntry, LogError> {
        if !store.contains(&payload_cid) {
            return Err(LogError::PayloadMissing(payload_cid));
        }
        let parents: Vec<Cid> = self.heads.iter().copied().collect();
        let clock = parents
            .iter()
            .map(|p| self.entries[p].clock() + 1)
            .max()
            .unwrap_or(0);
        let entry = LogEntry::from_body(EntryBody {
            author,
            clock,
            log_id: self.log_id.clone(),
            parents,
            payload_cid,
        });
        self.insert_unchecked(entry.clone());
        Ok(entry)
    }

    /// Merge entries from another replica.
    ///
    /// The incoming set must be parent-closed relative to the union with the
    /// local log. Every entry is verified (id re-hash, parent-clock
    /// invariant, parent resolution) before anything is applied, so a bad
    /// batch leaves the log untouched. Returns the ids of entries that were
    /// actually new, in insertion (causal) order.
    pub fn join(&mut self, incoming: Vec<LogEntry>) -> Result<Vec<Cid>, LogError> {
        let mut fresh: BTreeMap<Cid, LogEntry> = BTreeMap::new();
        for entry in incoming {
            if entry.log_id() != self.log_id {
                return Err(LogError::WrongLog {
                    entry: entry.id(),
                    got: entry.log_id().to_string(),
                    expected: self.log_id.clone(),
                });
            }
            if !entry.structurally_valid() {
                return Err(LogError::IntegrityFailure(entry.id()));
            }
            if !self.entries.contains_key(&entry.id()) {
                fresh.insert(entry.id(), entry);
            }
        }

        // Validate the parent-clock invariant against the union. Processing
        // in ascending clock order guarantees parents are checked first.
        let mut ordered: Vec<&LogEntry> = fresh.values().collect();
        ordered.sort_by_key(|e| (e.clock(), e.id()));
        for entry in &ordered {
            let mut max_parent_clock = None;
            for parent in entry.parents() {
                let parent_clock = self
                    .entries
                    .get(parent)
                    .or_else(|| fresh.get(parent))
                    .map(|p| p.clock())
                    .ok_or(LogError::DanglingParent(entry.id()))?;
                max_parent_clock = Some(max_parent_clock.map_or(parent_clock, |m: u64| m.max(parent_clock)));
            }
            let expected = match max_parent_clock {
                None => 0,
                Some(m) => m + 1,
            };
            if entry.clock() != expected {
                return Err(LogError::IntegrityFailure(entry.id()));
            }
        }

        let ids: Vec<Cid> = ordered.iter().map(|e| e.id()).collect();
        let to_insert: Vec<LogEntry> = ordered.into_iter().cloned().collect();
        for entry in to_insert {
            self.insert_unchecked(entry);
        }
        Ok(ids)
    }

    /// All entries in the deterministic replica-agreed order: ascending by
    /// (clock, id). Parents always precede children because a child's clock
    /// strictly exceeds every parent's.
    pub fn total_order(&self) -> Vec<&LogEntry> {
        let mut ordered: Vec<&LogEntry> = self.entries.values().collect();
        ordered.sort_by_key(|e| (e.clock(), e.id()));
        ordered
    }

    /// Which of the remote heads are unknown locally. The sync protocol
    /// fetches these and walks parents iteratively until closure.
    pub fn missing_entries(&self, remote_heads: &BTreeSet<Cid>) -> BTreeSet<Cid> {
        remote_heads
            .iter()
            .filter(|h| !self.entries.contains_key(h))
            .copied()
            .collect()
    }

    /// Rebuild a log from a heads snapshot plus entry blocks in the store.
    pub fn load_from_store(
        log_id: impl Into<String>,
        heads: &[Cid],
        store: &mut ContentStore,
    ) -> Result<Log, LogError> {
        let log_id = log_id.into();
        let mut collected: BTreeMap<Cid, LogEntry> = BTreeMap::new();
        let mut frontier: Vec<Cid> = heads.to_vec();
        while let Some(id) = frontier.pop() {
            if collected.contains_key(&id) {
                continue;
            }
            let bytes = store.get_block(&id).map_err(|e| match e {
                StoreError::NotFound(c) => LogError::DanglingParent(c),
                other => LogError::IntegrityFailure(match other {
                    StoreError::NotFound(c) => c,
                    _ => id,
                }),
            })?;
            let text = std::str::from_utf8(&bytes).map_err(|_| LogError::Undecodable(id))?;
            let entry = LogEntry::decode(text).map_err(|_| LogError::Undecodable(id))?;
            if entry.id() != id {
                return Err(LogError::IntegrityFailure(id));
            }
            frontier.extend(entry.parents().iter().copied());
            collected.insert(id, entry);
        }
        let mut log = Log::new(log_id);
        log.join(collected.into_values().collect())?;
        Ok(log)
    }

    /// Insert a verified entry, maintaining the heads invariant: heads are
    /// exactly the entries not referenced as a parent by any stored entry.
    /// Entries already in the log cannot reference a newly arriving entry
    /// (their parents are closed), so the new entry is always a head.
    fn insert_unchecked(&mut self, entry: LogEntry) {
        for parent in entry.parents() {
            self.heads.remove(parent);
        }
        self.heads.insert(entry.id());
        self.entries.insert(entry.id(), entry);
    }
}
