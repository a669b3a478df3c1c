//! The two paper-level stores and their record types.
//!
//! Contributions (announcements pairing a performance-data cid with
//! filterable attributes) live in the replicated log; the types and checks
//! here are shared by the contribution pipeline and the query paths. The
//! validations store is strictly local: records cross the network only
//! inside an explicit `VALIDATION_RESPONSE`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::cid::Cid;

/// Attribute keys every contribution must carry (non-empty).
pub const REQUIRED_ATTRIBUTES: [&str; 5] =
    ["platform", "framework", "workload", "submitter_region", "schema_version"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("schema violation: {}", .0.join(", "))]
    SchemaViolation(Vec<String>),
}

impl SchemaError {
    pub fn fields(&self) -> &[String] {
        match self {
            SchemaError::SchemaViolation(f) => f,
        }
    }
}

/// One workload execution: the payload behind a contribution and the row
/// type of the modeling workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub workload: String,
    pub framework: String,
    pub framework_version: String,
    pub machine_type: String,
    pub node_count: u32,
    pub input_size_bytes: u64,
    pub runtime_ms: u64,
    #[serde(default)]
    pub extra_metrics: BTreeMap<String, f64>,
}

impl PerformanceRecord {
    /// Check the record invariants; returns every offending field.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut bad = Vec::new();
        for (name, value) in [
            ("workload", &self.workload),
            ("framework", &self.framework),
            ("framework_version", &self.framework_version),
            ("machine_type", &self.machine_type),
        ] {
            if value.is_empty() {
                bad.push(name.to_string());
            }
        }
        if self.node_count < 1 {
            bad.push("node_count".to_string());
        }
        if self.runtime_ms < 1 {
            bad.push("runtime_ms".to_string());
        }
        if self.extra_metrics.values().any(|v| !v.is_finite()) {
            bad.push("extra_metrics".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SchemaError::SchemaViolation(bad))
        }
    }

    /// Canonical bytes: what gets hashed into the record's cid.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("performance record always encodes")
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

/// A shared announcement: the cid of a performance-data block plus
/// filterable attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub data_cid: Cid,
    pub attributes: BTreeMap<String, String>,
    pub created_at: u64,
}

impl Contribution {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let missing: Vec<String> = REQUIRED_ATTRIBUTES
            .iter()
            .filter(|k| self.attributes.get(**k).map(|v| v.is_empty()).unwrap_or(true))
            .map(|k| format!("attributes.{k}"))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(SchemaError::SchemaViolation(missing))
        }
    }

    /// Equality match against every predicate in `filter`.
    pub fn matches(&self, filter: &BTreeMap<String, String>) -> bool {
        filter.iter().all(|(k, v)| self.attributes.get(k) == Some(v))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("contribution always encodes")
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        serde_json::from_slice(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid,
    Inconclusive,
}

/// A peer's verdict on one cid. Keyed by
/// (subject_cid, validator_id, validator_version); re-validating upserts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub subject_cid: Cid,
    pub verdict: Verdict,
    pub validator_id: String,
    pub validator_version: String,
    pub produced_at: u64,
    pub detail: String,
}

/// Local, non-replicated validation results. Persists as one canonical
/// record per line (`validations.jsonl`), replayed on start with
/// last-write-wins per key.
#[derive(Debug, Clone)]
pub struct ValidationsStore {
    records: BTreeMap<(Cid, String, String), ValidationRecord>,
    persist_path: Option<PathBuf>,
}

impl ValidationsStore {
    pub fn in_memory() -> Self {
        ValidationsStore { records: BTreeMap::new(), persist_path: None }
    }

    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let mut store =
            ValidationsStore { records: BTreeMap::new(), persist_path: Some(path.clone()) };
        if path.exists() {
            for (lineno, line) in fs::read_to_string(&path)?.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ValidationRecord>(line) {
                    Ok(record) => {
                        store.insert_in_memory(record);
                    }
                    Err(e) => log::warn!("skipping bad validations line {}: {e}", lineno + 1),
                }
            }
        }
        Ok(store)
    }

    /// Upsert a record by its (subject, validator, version) key.
    pub fn record(&mut self, record: ValidationRecord) {
        if let Some(path) = &self.persist_path {
            let line = String::from_utf8(
                to_canonical_bytes(&record).expect("validation record always encodes"),
            )
            .expect("canonical encoding is utf-8");
            if let Err(e) = append_line(path, &line) {
                log::error!("failed to persist validation record: {e}");
            }
        }
        self.insert_in_memory(record);
    }

    fn insert_in_memory(&mut self, record: ValidationRecord) {
        let key =
            (record.subject_cid, record.validator_id.clone(), record.validator_version.clone());
        self.records.insert(key, record);
    }

    /// Latest record for (subject, validator), across validator versions.
    pub fn get(&self, subject: &Cid, validator_id: &str) -> Option<&ValidationRecord> {
        self.records
            .range((*subject, validator_id.to_string(), String::new())..)
            .take_while(|((cid, vid, _), _)| cid == subject && vid == validator_id)
            .map(|(_, r)| r)
            .max_by_key(|r| (r.produced_at, r.validator_version.clone()))
    }

    pub fn get_exact(&self, subject: &Cid, validator_id: &str, version: &str) -> Option<&ValidationRecord> {
        self.records.get(&(*subject, validator_id.to_string(), version.to_string()))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ValidationRecord> {
        self.records.values()
    }
}

fn append_line(path: &PathBuf, line: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(file, "{line}")
}
