//! Core building blocks of the peerperfnet data distribution layer.
//!
//! The crate is transport-agnostic: everything in here is driven either by
//! the real node daemon (TCP + tokio) or by the deterministic network
//! simulator. The important split is:
//!
//! - [`content_store`]: content-addressed block storage with pinning,
//!   integrity verification and LRU eviction of unpinned replicated blocks.
//! - [`replicated_log`]: the operation-based CRDT append-only log (Merkle
//!   DAG with Lamport clocks) behind the contributions store.
//! - [`data_stores`]: contribution and validation record types, the
//!   replicated contributions store view and the local validations store.
//! - [`validation`]: deterministic validators, vote consolidation, and the
//!   cost models used by the simulator.
//! - [`peer_protocol`]: wire messages, framing and the passphrase handshake.
//! - [`engine`]: the node state machine (gossip, anti-entropy, block
//!   exchange, validation scheduling, contribution pipeline). Pure with
//!   respect to I/O; all effects are returned as [`engine::Output`] values.
//! - [`modeling`]: training-set assembly and the baseline runtime model.
//! - [`config`]: node configuration file parsing and env overrides.

pub mod canonical;
pub mod cid;
pub mod config;
pub mod content_store;
pub mod data_stores;
pub mod engine;
pub mod modeling;
pub mod peer_protocol;
pub mod replicated_log;
pub mod validation;

pub use cid::Cid;
pub use peer_protocol::PeerId;
