//! The node state machine.
//!
//! An [`Engine`] owns all mutable node state: content store, contributions
//! log, validations store, deny list, sessions and in-flight exchanges. It
//! performs no I/O and never looks at a clock; every entry point takes `now`
//! in milliseconds and returns the effects to perform as [`Output`] values.
//! The daemon drives it with real sockets and timers, the simulator with
//! virtual ones, so both run exactly the same protocol.
//!
//! Protocol behavior in brief:
//!
//! - Handshake: mutual challenge-response over the passphrase-derived key.
//!   The initiator sends `HELLO` with a fresh nonce, the responder counters
//!   with its own `HELLO`, the initiator answers with a `HELLO_ACK` MAC, and
//!   only after verifying it does the responder send its own `HELLO_ACK`
//!   (with its peer list). Neither side treats the session as live, nor
//!   reveals peers, before verifying the other.
//! - Replication: new local appends are pushed eagerly (entry plus payload
//!   blocks) to every connected peer; periodic `HEADS` gossip to `fan_out`
//!   random peers repairs anything missed. Unknown heads are fetched from
//!   the announcing peer, walking parents until closure.
//! - Block exchange: wanted blocks are broadcast-requested; the first valid
//!   `BLOCK` wins and duplicates are dropped. `WANT`s for deny-listed cids
//!   get the same `BLOCK_MISSING` as absent ones.
//! - Validation: queries are answered immediately from the validations
//!   store; running validations never delay a response.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use bytes::Bytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cid::Cid;
use crate::content_store::{BlockOrigin, ContentStore, StoreError};
use crate::data_stores::{
    Contribution, PerformanceRecord, SchemaError, ValidationRecord, ValidationsStore, Verdict,
};
use crate::peer_protocol::{
    response_mac, verify_mac, AuthKey, BlockBytes, DenyList, Mac, Message, Nonce, PeerContact,
    PeerId,
};
use crate::replicated_log::{Log, LogEntry, LogError, CONTRIBUTIONS_LOG_ID};
use crate::validation::{
    consolidate_votes, validate_local, RangeRules, ValidatorSpec, VoteOutcome, VotePolicy,
};

/// Transport connection handle, assigned by the driver.
pub type ConnId = u64;

/// Request correlation id for API-originated operations.
pub type RequestId = u64;

const HANDSHAKE_TIMEOUT_FACTOR: u64 = 5;

/// What to do with replicated contribution data blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinPolicy {
    /// Fetch and pin the data block of every contribution (full replica).
    PinAllContributions,
    /// Fetch data on use only; pin what gets fetched.
    PinOnUse,
    /// Fetch data on use only; never pin replicated data.
    PinNone,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub peer_id: PeerId,
    pub region: String,
    /// Dialable address advertised to other peers; empty if not dialable.
    pub listen_address: String,
    pub network_key: AuthKey,
    pub gossip_interval_ms: u64,
    pub fan_out: usize,
    pub response_timeout_ms: u64,
    pub vote_policy: VotePolicy,
    pub validator: ValidatorSpec,
    pub range_rules: RangeRules,
    pub pin_policy: PinPolicy,
    pub rng_seed: u64,
}

impl EngineConfig {
    pub fn new(peer_id: PeerId, region: impl Into<String>, network_key: AuthKey) -> Self {
        EngineConfig {
            peer_id,
            region: region.into(),
            listen_address: String::new(),
            network_key,
            gossip_interval_ms: 1000,
            fan_out: 4,
            response_timeout_ms: 2000,
            vote_policy: VotePolicy::default(),
            validator: ValidatorSpec::default(),
            range_rules: RangeRules::default(),
            pin_policy: PinPolicy::PinAllContributions,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseReason {
    AuthFailure,
    ProtocolViolation,
    HandshakeTimeout,
    DuplicateSession,
}

/// Effects for the driver to perform.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send { conn: ConnId, msg: Message },
    Close { conn: ConnId, reason: CloseReason },
    /// Run the configured validator over the block in a background task and
    /// call [`Engine::complete_validation`] with the result.
    StartValidation { subject: Cid },
    Event(NodeEvent),
}

/// Application-level notifications (metrics, API completions, discovery).
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    SessionEstablished { conn: ConnId, peer: PeerId, region: String },
    SessionClosed { conn: ConnId, peer: Option<PeerId> },
    AuthFailed { conn: ConnId },
    /// New dialable contacts learned from a peer list.
    PeersDiscovered { contacts: Vec<PeerContact> },
    ContributionAppended { entry_id: Cid, contribution: Contribution },
    /// Entry, contribution block and (policy permitting) data block are all
    /// local now.
    ContributionComplete { entry_id: Cid, data_cid: Cid },
    BootstrapCompleted { elapsed_ms: u64 },
    FetchCompleted { request_id: RequestId, result: Result<Bytes, FetchFailure> },
    ValidationRecorded { record: ValidationRecord },
    VoteDecided { subject: Cid, outcome: VoteOutcome, responses: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FetchFailure {
    #[error("no connected peer holds the block")]
    NotFoundAnywhere,
}

#[derive(Debug, Error)]
pub enum ContributeError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("pre-publication validation verdict was {verdict:?}: {detail}")]
    ValidationFailedPrePublish { verdict: Verdict, detail: String },
    #[error("store rejected payload: {0}")]
    Store(#[from] StoreError),
    #[error("log rejected entry: {0}")]
    Log(#[from] LogError),
}

/// Result of a successful contribute call.
#[derive(Debug, Clone, PartialEq)]
pub enum ContributeOutcome {
    Shared { entry_id: Cid, data_cid: Cid, contribution: Contribution },
    /// Stored locally and deny-listed; never announced.
    Private { data_cid: Cid },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleOutcome {
    Started,
    /// A task for this subject is already running; the calls coalesce.
    Coalesced,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("block {0} not present locally")]
    NotFound(Cid),
}

/// Validity filter for queries, mirroring how modeling consumes data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityPolicy {
    Any,
    /// Own verdict decides when present; otherwise a network-valid vote.
    NetworkOrOwnValid,
    OwnValidOnly,
}

/// One row of a query result.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub entry_id: Cid,
    pub contribution: Contribution,
    pub available_locally: bool,
    pub own_verdict: Option<Verdict>,
    pub network_valid: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct StatusSnapshot {
    pub peer_id: PeerId,
    pub region: String,
    pub peer_count: usize,
    pub known_peers: usize,
    pub block_count: usize,
    pub store_bytes: u64,
    pub log_len: usize,
    pub heads: Vec<Cid>,
    pub contribution_count: usize,
    pub validation_count: usize,
    pub pending_wants: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SessionPhase {
    /// We dialed and sent `HELLO`; waiting for the counter-challenge.
    InitiatorSentHello,
    /// We answered the counter-challenge; waiting for the responder's ack.
    InitiatorAwaitAck,
    /// Inbound connection; nothing received yet.
    ResponderAwaitHello,
    /// We received `HELLO` and countered; waiting for the initiator's ack.
    ResponderAwaitAck,
    Authenticated,
}

#[derive(Debug, Clone)]
struct Session {
    phase: SessionPhase,
    initiated_by_us: bool,
    /// The challenge we issued; acks must MAC over it.
    our_nonce: Nonce,
    /// The challenge the peer issued; our ack MACs over it.
    their_nonce: Option<Nonce>,
    peer: Option<PeerId>,
    region: Option<String>,
    created_at: u64,
}

#[derive(Debug, Clone, Default)]
struct WantState {
    pin: bool,
    api_requests: Vec<RequestId>,
    /// Keep retrying forever (replication needs) vs fail after broadcast.
    replication: bool,
    asked: BTreeSet<ConnId>,
    missing_from: BTreeSet<ConnId>,
    broadcast: bool,
    deadline: u64,
}

/// Tracking for one log entry's payload chain.
#[derive(Debug, Clone)]
struct TrackedContribution {
    contribution: Option<Contribution>,
    data_present: bool,
    completed: bool,
}

#[derive(Debug, Clone)]
struct VoteRound {
    responses: Vec<ValidationRecord>,
    responders: BTreeSet<PeerId>,
    asked: usize,
    deadline: u64,
}

#[derive(Debug, Clone)]
struct BootstrapState {
    conn: ConnId,
    started_at: u64,
    snapshot: Option<BTreeSet<Cid>>,
    completed: bool,
}

/// The node state machine. See the module docs for the protocol overview.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    store: ContentStore,
    log: Log,
    validations: ValidationsStore,
    deny: DenyList,
    rng: ChaCha8Rng,

    sessions: BTreeMap<ConnId, Session>,
    by_peer: BTreeMap<PeerId, ConnId>,
    known_peers: BTreeMap<PeerId, PeerContact>,

    pending_entries: BTreeMap<Cid, LogEntry>,
    requested_entries: BTreeMap<Cid, u64>,
    wants: BTreeMap<Cid, WantState>,
    /// payload cid -> entries waiting for that contribution block.
    waiting_payload: BTreeMap<Cid, BTreeSet<Cid>>,
    /// data cid -> entries waiting for that data block.
    waiting_data: BTreeMap<Cid, BTreeSet<Cid>>,
    tracked: BTreeMap<Cid, TrackedContribution>,
    incomplete: BTreeSet<Cid>,

    inflight_validations: BTreeSet<Cid>,
    vote_rounds: BTreeMap<Cid, VoteRound>,
    network_verdicts: BTreeMap<Cid, VoteOutcome>,

    bootstrap: Option<BootstrapState>,
    next_gossip_at: u64,
    persist_root: Option<PathBuf>,
}

impl Engine {
    pub fn new(cfg: EngineConfig, store: ContentStore, validations: ValidationsStore) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let log = Log::new(CONTRIBUTIONS_LOG_ID);
        Engine {
            cfg,
            store,
            log,
            validations,
            deny: DenyList::new(),
            rng,
            sessions: BTreeMap::new(),
            by_peer: BTreeMap::new(),
            known_peers: BTreeMap::new(),
            pending_entries: BTreeMap::new(),
            requested_entries: BTreeMap::new(),
            wants: BTreeMap::new(),
            waiting_payload: BTreeMap::new(),
            waiting_data: BTreeMap::new(),
            tracked: BTreeMap::new(),
            incomplete: BTreeSet::new(),
            inflight_validations: BTreeSet::new(),
            vote_rounds: BTreeMap::new(),
            network_verdicts: BTreeMap::new(),
            bootstrap: None,
            next_gossip_at: 0,
            persist_root: None,
        }
    }

    /// Enable persistence of heads and the deny list under `root`, and
    /// replay any previous state found there.
    pub fn with_persistence(mut self, root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        self.persist_root = Some(root.clone());
        self.replay_persisted(&root);
        self
    }

    fn replay_persisted(&mut self, root: &std::path::Path) {
        let deny_path = root.join("denylist.json");
        if deny_path.exists() {
            match std::fs::read_to_string(&deny_path)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<Vec<Cid>>(&s).map_err(|e| e.to_string()))
            {
                Ok(cids) => self.deny = cids.into_iter().collect(),
                Err(e) => log::warn!("could not replay deny list: {e}"),
            }
        }
        let heads_path = root.join("logs").join(CONTRIBUTIONS_LOG_ID).with_extension("heads.json");
        if heads_path.exists() {
            let loaded = std::fs::read_to_string(&heads_path)
                .map_err(|e| e.to_string())
                .and_then(|s| serde_json::from_str::<Vec<Cid>>(&s).map_err(|e| e.to_string()))
                .and_then(|heads| {
                    Log::load_from_store(CONTRIBUTIONS_LOG_ID, &heads, &mut self.store)
                        .map_err(|e| e.to_string())
                });
            match loaded {
                Ok(log) => {
                    self.log = log;
                    let entries: Vec<(Cid, Cid)> =
                        self.log.entries().map(|e| (e.id(), e.payload_cid())).collect();
                    for (entry_id, payload_cid) in entries {
                        self.track_entry_payload(entry_id, payload_cid);
                    }
                }
                Err(e) => log::warn!("could not replay contributions log: {e}"),
            }
        }
    }

    fn persist_heads(&self) {
        let Some(root) = &self.persist_root else { return };
        let path = root.join("logs").join(CONTRIBUTIONS_LOG_ID).with_extension("heads.json");
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        let heads: Vec<String> = self.log.heads().iter().map(|c| c.to_string()).collect();
        let body = serde_json::to_string(&heads).expect("heads serialize");
        if let Err(e) = atomic_write(&path, body.as_bytes()) {
            log::error!("failed to persist heads: {e}");
        }
    }

    fn persist_deny(&self) {
        let Some(root) = &self.persist_root else { return };
        let cids: Vec<String> = self.deny.iter().map(|c| c.to_string()).collect();
        let body = serde_json::to_string(&cids).expect("deny list serializes");
        if let Err(e) = atomic_write(&root.join("denylist.json"), body.as_bytes()) {
            log::error!("failed to persist deny list: {e}");
        }
    }

    pub fn peer_id(&self) -> PeerId {
        self.cfg.peer_id
    }

    pub fn region(&self) -> &str {
        &self.cfg.region
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn log(&self) -> &Log {
        &self.log
    }

    pub fn store(&self) -> &ContentStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ContentStore {
        &mut self.store
    }

    pub fn validations(&self) -> &ValidationsStore {
        &self.validations
    }

    pub fn deny_list(&self) -> &DenyList {
        &self.deny
    }

    pub fn network_verdict(&self, subject: &Cid) -> Option<&VoteOutcome> {
        self.network_verdicts.get(subject)
    }

    pub fn connected_peers(&self) -> impl Iterator<Item = (&PeerId, &ConnId)> {
        self.by_peer.iter()
    }

    pub fn known_contacts(&self) -> impl Iterator<Item = &PeerContact> {
        self.known_peers.values()
    }

    pub fn is_idle(&self) -> bool {
        self.pending_entries.is_empty()
            && self.wants.is_empty()
            && self.vote_rounds.is_empty()
            && self.inflight_validations.is_empty()
            && self.bootstrap.as_ref().map(|b| b.completed).unwrap_or(true)
    }

    /// Compact state summary for determinism checks in tests.
    pub fn fingerprint(&self) -> String {
        let heads: Vec<String> = self.log.heads().iter().map(|c| c.to_string()).collect();
        let blocks: Vec<String> = self.store.list().map(|c| c.to_string()).collect();
        format!(
            "heads={heads:?} log={} blocks={} pend={} wants={} blocklist={blocks:?}",
            self.log.len(),
            self.store.block_count(),
            self.pending_entries.len(),
            self.wants.len(),
        )
    }

    // ------------------------------------------------------------------
    // Connection lifecycle
    // ------------------------------------------------------------------

    /// Register a new transport connection. If we dialed it, the handshake
    /// opens immediately with our `HELLO`.
    pub fn on_connection_opened(&mut self, conn: ConnId, initiated: bool, now: u64) -> Vec<Output> {
        let nonce = Nonce::generate(&mut self.rng);
        self.sessions.insert(
            conn,
            Session {
                phase: if initiated {
                    SessionPhase::InitiatorSentHello
                } else {
                    SessionPhase::ResponderAwaitHello
                },
                initiated_by_us: initiated,
                our_nonce: nonce,
                their_nonce: None,
                peer: None,
                region: None,
                created_at: now,
            },
        );
        if initiated {
            vec![Output::Send {
                conn,
                msg: Message::Hello {
                    peer_id: self.cfg.peer_id,
                    region: self.cfg.region.clone(),
                    nonce,
                },
            }]
        } else {
            Vec::new()
        }
    }

    /// Mark the connection used for bootstrapping. Bootstrap completes when
    /// the log has caught up with the bootstrap peer's heads at join time.
    pub fn begin_bootstrap(&mut self, conn: ConnId, now: u64) {
        self.bootstrap =
            Some(BootstrapState { conn, started_at: now, snapshot: None, completed: false });
    }

    pub fn on_connection_closed(&mut self, conn: ConnId, _now: u64) -> Vec<Output> {
        let mut out = Vec::new();
        if let Some(session) = self.sessions.remove(&conn) {
            if let Some(peer) = session.peer {
                if self.by_peer.get(&peer) == Some(&conn) {
                    self.by_peer.remove(&peer);
                }
            }
            out.push(Output::Event(NodeEvent::SessionClosed { conn, peer: session.peer }));
        }
        for want in self.wants.values_mut() {
            want.asked.remove(&conn);
            want.missing_from.remove(&conn);
        }
        out
    }

    // ------------------------------------------------------------------
    // Message handling
    // ------------------------------------------------------------------

    /// Process one inbound message. Pure and deterministic: the same state,
    /// message and `now` always produce the same state and outputs.
    pub fn handle_message(&mut self, conn: ConnId, msg: Message, now: u64) -> Vec<Output> {
        let Some(session) = self.sessions.get(&conn) else {
            return Vec::new(); // racing close; nothing to do
        };
        let authenticated = session.phase == SessionPhase::Authenticated;
        match msg {
            Message::Hello { peer_id, region, nonce } => {
                self.on_hello(conn, peer_id, region, nonce, now)
            }
            Message::HelloAck { peer_id, region, mac, peer_list } => {
                self.on_hello_ack(conn, peer_id, region, mac, peer_list, now)
            }
            Message::AuthFail {} => {
                let mut out = vec![Output::Event(NodeEvent::AuthFailed { conn })];
                out.push(Output::Close { conn, reason: CloseReason::AuthFailure });
                out.extend(self.on_connection_closed(conn, now));
                out
            }
            _ if !authenticated => {
                // Only handshake traffic is allowed before authentication.
                self.protocol_violation(conn, now)
            }
            Message::Heads { log_id, head_cids } => self.on_heads(conn, &log_id, head_cids, now),
            Message::FetchEntries { cids } => self.on_fetch_entries(conn, &cids),
            Message::Entries { entries } => self.on_entries(conn, entries, now),
            Message::Want { cid } => self.on_want(conn, cid),
            Message::Block { cid, bytes } => self.on_block(conn, cid, bytes.0, now),
            Message::BlockMissing { cid } => self.on_block_missing(conn, cid, now),
            Message::ValidationQuery { subject_cid } => self.on_validation_query(conn, subject_cid),
            Message::ValidationResponse { subject_cid, record } => {
                self.on_validation_response(conn, subject_cid, record, now)
            }
        }
    }

    fn on_hello(
        &mut self,
        conn: ConnId,
        peer_id: PeerId,
        region: String,
        nonce: Nonce,
        now: u64,
    ) -> Vec<Output> {
        let Some(session) = self.sessions.get_mut(&conn) else { return Vec::new() };
        match session.phase {
            SessionPhase::InitiatorSentHello => {
                // Their counter-challenge: answer with our MAC. Our peer
                // list is withheld until they prove themselves; only our own
                // contact card goes out so responders learn our address.
                session.peer = Some(peer_id);
                session.region = Some(region);
                session.their_nonce = Some(nonce);
                session.phase = SessionPhase::InitiatorAwaitAck;
                let mac = response_mac(&self.cfg.network_key, &nonce, &self.cfg.peer_id);
                vec![Output::Send {
                    conn,
                    msg: Message::HelloAck {
                        peer_id: self.cfg.peer_id,
                        region: self.cfg.region.clone(),
                        mac,
                        peer_list: vec![self.self_contact()],
                    },
                }]
            }
            SessionPhase::ResponderAwaitHello => {
                // Fresh inbound connection: record them and counter-challenge.
                session.peer = Some(peer_id);
                session.region = Some(region);
                session.their_nonce = Some(nonce);
                session.phase = SessionPhase::ResponderAwaitAck;
                let our_nonce = session.our_nonce;
                vec![Output::Send {
                    conn,
                    msg: Message::Hello {
                        peer_id: self.cfg.peer_id,
                        region: self.cfg.region.clone(),
                        nonce: our_nonce,
                    },
                }]
            }
            _ => self.protocol_violation(conn, now),
        }
    }

    fn on_hello_ack(
        &mut self,
        conn: ConnId,
        peer_id: PeerId,
        region: String,
        mac: Mac,
        peer_list: Vec<PeerContact>,
        now: u64,
    ) -> Vec<Output> {
        let Some(session) = self.sessions.get(&conn) else { return Vec::new() };
        // Either role: the ack must MAC over the challenge nonce we issued,
        // keyed on the sender's claimed peer id. A replayed ack carries a MAC
        // over some stale nonce and fails here.
        let expected = response_mac(&self.cfg.network_key, &session.our_nonce, &peer_id);
        let mac_ok = verify_mac(&expected, &mac);
        let claimed_ok = session.peer == Some(peer_id);
        match session.phase {
            SessionPhase::ResponderAwaitAck => {
                if !(mac_ok && claimed_ok) {
                    return self.auth_fail(conn, now);
                }
                // The initiator proved itself: answer its original challenge
                // and only now share our peer list.
                let their_nonce = session.their_nonce.expect("set when HELLO arrived");
                let our_mac = response_mac(&self.cfg.network_key, &their_nonce, &self.cfg.peer_id);
                let mut out = vec![Output::Send {
                    conn,
                    msg: Message::HelloAck {
                        peer_id: self.cfg.peer_id,
                        region: self.cfg.region.clone(),
                        mac: our_mac,
                        peer_list: self.shareable_contacts(),
                    },
                }];
                out.extend(self.establish(conn, peer_id, region, peer_list, now));
                out
            }
            SessionPhase::InitiatorAwaitAck => {
                if !(mac_ok && claimed_ok) {
                    return self.auth_fail(conn, now);
                }
                self.establish(conn, peer_id, region, peer_list, now)
            }
            _ => self.protocol_violation(conn, now),
        }
    }

    fn auth_fail(&mut self, conn: ConnId, now: u64) -> Vec<Output> {
        let mut out = vec![
            Output::Send { conn, msg: Message::AuthFail {} },
            Output::Event(NodeEvent::AuthFailed { conn }),
            Output::Close { conn, reason: CloseReason::AuthFailure },
        ];
        out.extend(self.on_connection_closed(conn, now));
        out
    }

    fn protocol_violation(&mut self, conn: ConnId, now: u64) -> Vec<Output> {
        let mut out = vec![Output::Close { conn, reason: CloseReason::ProtocolViolation }];
        out.extend(self.on_connection_closed(conn, now));
        out
    }

    fn self_contact(&self) -> PeerContact {
        PeerContact {
            peer_id: self.cfg.peer_id,
            region: self.cfg.region.clone(),
            address: self.cfg.listen_address.clone(),
        }
    }

    /// Our contact card plus every dialable contact we know.
    fn shareable_contacts(&self) -> Vec<PeerContact> {
        let mut list = vec![self.self_contact()];
        list.extend(self.known_peers.values().filter(|c| !c.address.is_empty()).cloned());
        list
    }

    fn establish(
        &mut self,
        conn: ConnId,
        peer_id: PeerId,
        region: String,
        peer_list: Vec<PeerContact>,
        now: u64,
    ) -> Vec<Output> {
        let mut out = Vec::new();

        // Duplicate-session rule: if another authenticated session to the
        // same peer exists, both ends keep the one initiated by the smaller
        // peer id so they agree without coordination.
        if let Some(&existing) = self.by_peer.get(&peer_id) {
            if existing != conn {
                let new_initiator_is_smaller = {
                    let s = &self.sessions[&conn];
                    let initiator =
                        if s.initiated_by_us { self.cfg.peer_id } else { peer_id };
                    let existing_initiator = if self.sessions[&existing].initiated_by_us {
                        self.cfg.peer_id
                    } else {
                        peer_id
                    };
                    initiator < existing_initiator
                };
                let losing = if new_initiator_is_smaller { existing } else { conn };
                out.push(Output::Close { conn: losing, reason: CloseReason::DuplicateSession });
                out.extend(self.on_connection_closed(losing, now));
                if losing == conn {
                    return out;
                }
            }
        }

        if let Some(session) = self.sessions.get_mut(&conn) {
            session.phase = SessionPhase::Authenticated;
            session.peer = Some(peer_id);
            session.region = Some(region.clone());
        }
        self.by_peer.insert(peer_id, conn);
        self.known_peers.entry(peer_id).or_insert_with(|| PeerContact {
            peer_id,
            region: region.clone(),
            address: String::new(),
        });

        let mut discovered = Vec::new();
        for contact in peer_list {
            if contact.peer_id == self.cfg.peer_id {
                continue;
            }
            let entry = self.known_peers.entry(contact.peer_id).or_insert_with(|| contact.clone());
            if entry.address.is_empty() && !contact.address.is_empty() {
                entry.address = contact.address.clone();
            }
            if !contact.address.is_empty() && !self.by_peer.contains_key(&contact.peer_id) {
                discovered.push(contact);
            }
        }

        out.push(Output::Event(NodeEvent::SessionEstablished { conn, peer: peer_id, region }));
        if !discovered.is_empty() {
            out.push(Output::Event(NodeEvent::PeersDiscovered { contacts: discovered }));
        }

        // Announce our heads so anti-entropy starts immediately, even when
        // the log is empty (a bootstrapping joiner needs the snapshot).
        out.push(Output::Send {
            conn,
            msg: Message::Heads {
                log_id: self.log.log_id().to_string(),
                head_cids: self.log.heads().iter().copied().collect(),
            },
        });
        out
    }

    // ------------------------------------------------------------------
    // Anti-entropy: heads, entries, closure walking
    // ------------------------------------------------------------------

    fn on_heads(&mut self, conn: ConnId, log_id: &str, head_cids: Vec<Cid>, now: u64) -> Vec<Output> {
        if log_id != self.log.log_id() {
            return Vec::new();
        }
        let mut out = Vec::new();

        // Bootstrapping: the first heads announcement from the bootstrap
        // peer is the snapshot we must catch up with.
        if let Some(bs) = &mut self.bootstrap {
            if bs.conn == conn && bs.snapshot.is_none() {
                bs.snapshot = Some(head_cids.iter().copied().collect());
            }
        }

        let heads: BTreeSet<Cid> = head_cids.into_iter().collect();
        let unknown: Vec<Cid> = self
            .log
            .missing_entries(&heads)
            .into_iter()
            .filter(|c| !self.pending_entries.contains_key(c))
            .filter(|c| !self.requested_entries.contains_key(c))
            .collect();
        if !unknown.is_empty() {
            for cid in &unknown {
                self.requested_entries.insert(*cid, now + self.cfg.response_timeout_ms);
            }
            out.push(Output::Send { conn, msg: Message::FetchEntries { cids: unknown } });
        }
        out.extend(self.check_bootstrap(now));
        out
    }

    /// Answer an entry fetch with the requested entries plus their ancestor
    /// closure (bounded), saving the requester one round trip per DAG level.
    /// Anything beyond the cap is walked iteratively by the requester.
    fn on_fetch_entries(&mut self, conn: ConnId, cids: &[Cid]) -> Vec<Output> {
        const MAX_ENTRIES_PER_RESPONSE: usize = 256;
        let mut included: BTreeSet<Cid> = BTreeSet::new();
        let mut encodings: Vec<String> = Vec::new();
        let mut frontier: Vec<Cid> = cids.to_vec();
        while let Some(cid) = frontier.pop() {
            if encodings.len() >= MAX_ENTRIES_PER_RESPONSE {
                break;
            }
            if !included.insert(cid) {
                continue;
            }
            if let Some(entry) = self.log.get(&cid) {
                encodings.push(entry.canonical_encoding());
                frontier.extend(entry.parents().iter().copied());
            }
        }
        if encodings.is_empty() {
            return Vec::new();
        }
        vec![Output::Send { conn, msg: Message::Entries { entries: encodings } }]
    }

    fn on_entries(&mut self, conn: ConnId, entries: Vec<String>, now: u64) -> Vec<Output> {
        for encoding in entries {
            match LogEntry::decode(&encoding) {
                Ok(entry) => {
                    self.requested_entries.remove(&entry.id());
                    if !self.log.contains(&entry.id()) {
                        self.pending_entries.insert(entry.id(), entry);
                    }
                }
                Err(e) => log::warn!("dropping undecodable entry from {conn}: {e}"),
            }
        }
        self.integrate_pending(conn, now)
    }

    /// Try to join the staged entries; request still-missing parents from
    /// the peer that got us here. Called whenever new entries arrive.
    fn integrate_pending(&mut self, conn: ConnId, now: u64) -> Vec<Output> {
        let mut out = Vec::new();

        let mut unknown_parents: Vec<Cid> = Vec::new();
        for entry in self.pending_entries.values() {
            for parent in entry.parents() {
                if !self.log.contains(parent)
                    && !self.pending_entries.contains_key(parent)
                    && !self.requested_entries.contains_key(parent)
                {
                    unknown_parents.push(*parent);
                }
            }
        }
        unknown_parents.sort();
        unknown_parents.dedup();
        if !unknown_parents.is_empty() {
            for cid in &unknown_parents {
                self.requested_entries.insert(*cid, now + self.cfg.response_timeout_ms);
            }
            out.push(Output::Send { conn, msg: Message::FetchEntries { cids: unknown_parents } });
            return out;
        }
        if self.pending_entries.iter().any(|(_, e)| {
            e.parents().iter().any(|p| self.requested_entries.contains_key(p))
        }) {
            // Parents already in flight from an earlier round.
            return out;
        }
        if self.pending_entries.is_empty() {
            return out;
        }

        // Closure reached: join everything staged. A corrupt entry poisons
        // only itself (and its descendants): drop it and retry.
        let mut batch: Vec<LogEntry> = self.pending_entries.values().cloned().collect();
        let joined = loop {
            match self.log.join(batch.clone()) {
                Ok(ids) => break ids,
                Err(err) => {
                    let bad = match err {
                        LogError::IntegrityFailure(c)
                        | LogError::DanglingParent(c)
                        | LogError::PayloadMissing(c)
                        | LogError::Undecodable(c) => c,
                        LogError::WrongLog { entry, .. } => entry,
                    };
                    log::warn!("rejecting entry {bad} during join: {err}");
                    batch.retain(|e| e.id() != bad);
                    if batch.is_empty() {
                        break Vec::new();
                    }
                }
            }
        };
        self.pending_entries.clear();

        for entry_id in joined {
            let entry = self.log.get(&entry_id).expect("just joined").clone();
            // Entries persist as pinned content blocks; the log must stay
            // closed under parents even when replicated data gets evicted.
            let encoding = Bytes::from(entry.canonical_encoding().into_bytes());
            if let Err(e) = self.store.put_block(encoding, BlockOrigin::Replicated) {
                log::error!("could not store entry block {entry_id}: {e}");
            } else {
                let _ = self.store.set_pin(&entry_id, true);
            }
            self.track_entry_payload(entry_id, entry.payload_cid());
            out.extend(self.request_tracked_blocks(entry_id, now));
        }
        self.persist_heads();
        out.extend(self.check_bootstrap(now));
        out
    }

    /// Register interest in an entry's contribution block (and transitively
    /// its data block), emitting completion events once everything needed
    /// under the pin policy is local.
    fn track_entry_payload(&mut self, entry_id: Cid, payload_cid: Cid) {
        if self.tracked.contains_key(&entry_id) {
            return;
        }
        self.tracked.insert(
            entry_id,
            TrackedContribution { contribution: None, data_present: false, completed: false },
        );
        self.incomplete.insert(entry_id);
        self.waiting_payload.entry(payload_cid).or_default().insert(entry_id);
    }

    fn request_tracked_blocks(&mut self, entry_id: Cid, now: u64) -> Vec<Output> {
        let mut out = Vec::new();
        let Some(entry) = self.log.get(&entry_id) else { return out };
        let payload_cid = entry.payload_cid();
        if self.store.contains(&payload_cid) {
            out.extend(self.resolve_payload_block(payload_cid, now));
        } else {
            out.extend(self.want_block(payload_cid, true, true, None, now));
        }
        out
    }

    /// A contribution block became available: parse it and decide whether
    /// the data block is needed too.
    fn resolve_payload_block(&mut self, payload_cid: Cid, now: u64) -> Vec<Output> {
        let mut out = Vec::new();
        let Some(entry_ids) = self.waiting_payload.remove(&payload_cid) else {
            return out;
        };
        let bytes = match self.store.get_block(&payload_cid) {
            Ok(b) => b,
            Err(e) => {
                log::error!("payload block {payload_cid} vanished: {e}");
                return out;
            }
        };
        let contribution = match Contribution::parse(&bytes) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("contribution block {payload_cid} does not parse: {e}");
                // Nothing more to fetch for these entries; they stay visible
                // in the log but unresolvable as contributions.
                for entry_id in entry_ids {
                    self.tracked.remove(&entry_id);
                    self.incomplete.remove(&entry_id);
                }
                return out;
            }
        };
        let data_cid = contribution.data_cid;
        let fetch_data = self.cfg.pin_policy == PinPolicy::PinAllContributions;
        for entry_id in entry_ids {
            if let Some(tracked) = self.tracked.get_mut(&entry_id) {
                tracked.contribution = Some(contribution.clone());
                tracked.data_present = self.store.contains(&data_cid);
                if tracked.data_present || !fetch_data {
                    out.extend(self.complete_contribution(entry_id, data_cid));
                } else {
                    self.waiting_data.entry(data_cid).or_default().insert(entry_id);
                }
            }
        }
        if fetch_data && !self.store.contains(&data_cid) {
            let pin = true;
            out.extend(self.want_block(data_cid, pin, true, None, now));
        }
        out
    }

    fn resolve_data_block(&mut self, data_cid: Cid) -> Vec<Output> {
        let mut out = Vec::new();
        let Some(entry_ids) = self.waiting_data.remove(&data_cid) else { return out };
        for entry_id in entry_ids {
            if let Some(tracked) = self.tracked.get_mut(&entry_id) {
                tracked.data_present = true;
            }
            out.extend(self.complete_contribution(entry_id, data_cid));
        }
        out
    }

    fn complete_contribution(&mut self, entry_id: Cid, data_cid: Cid) -> Vec<Output> {
        let Some(tracked) = self.tracked.get_mut(&entry_id) else { return Vec::new() };
        if tracked.completed {
            return Vec::new();
        }
        tracked.completed = true;
        self.incomplete.remove(&entry_id);
        vec![Output::Event(NodeEvent::ContributionComplete { entry_id, data_cid })]
    }

    // ------------------------------------------------------------------
    // Block exchange
    // ------------------------------------------------------------------

    fn on_want(&mut self, conn: ConnId, cid: Cid) -> Vec<Output> {
        // Denied and absent look identical from outside: no existence leak.
        if self.deny.contains(&cid) || !self.store.contains(&cid) {
            return vec![Output::Send { conn, msg: Message::BlockMissing { cid } }];
        }
        match self.store.get_block(&cid) {
            Ok(bytes) => vec![Output::Send {
                conn,
                msg: Message::Block { cid, bytes: BlockBytes(bytes) },
            }],
            Err(_) => vec![Output::Send { conn, msg: Message::BlockMissing { cid } }],
        }
    }

    fn on_block(&mut self, _conn: ConnId, cid: Cid, bytes: Bytes, now: u64) -> Vec<Output> {
        if !ContentStore::verify(&cid, &bytes) {
            log::warn!("discarding block whose bytes do not hash to {cid}");
            return Vec::new();
        }
        let wanted = self.wants.contains_key(&cid);
        let awaited =
            self.waiting_payload.contains_key(&cid) || self.waiting_data.contains_key(&cid);
        if !wanted && !awaited {
            // Unsolicited and unreferenced: drop. (First-wins duplicates of
            // broadcast wants also land here once the want is resolved.)
            return Vec::new();
        }

        let mut out = Vec::new();
        let pin = self.wants.get(&cid).map(|w| w.pin).unwrap_or(true);
        match self.store.put_block(bytes.clone(), BlockOrigin::Replicated) {
            Ok(_) => {
                if pin {
                    let _ = self.store.set_pin(&cid, true);
                }
            }
            Err(e) => {
                log::error!("could not store block {cid}: {e}");
                return out;
            }
        }
        if let Some(want) = self.wants.remove(&cid) {
            for request_id in want.api_requests {
                out.push(Output::Event(NodeEvent::FetchCompleted {
                    request_id,
                    result: Ok(bytes.clone()),
                }));
            }
        }
        out.extend(self.resolve_payload_block(cid, now));
        out.extend(self.resolve_data_block(cid));
        out.extend(self.check_bootstrap(now));
        out
    }

    fn on_block_missing(&mut self, conn: ConnId, cid: Cid, now: u64) -> Vec<Output> {
        let Some(want) = self.wants.get_mut(&cid) else { return Vec::new() };
        want.missing_from.insert(conn);
        let mut out = Vec::new();
        if !want.broadcast {
            // Our targeted ask failed; go wide immediately.
            out.extend(self.broadcast_want(cid, now));
        } else {
            out.extend(self.maybe_fail_want(cid, now));
        }
        out
    }

    /// Start (or join) a want for `cid`. `replication` wants retry forever;
    /// API wants fail with `NotFoundAnywhere` after a broadcast round.
    fn want_block(
        &mut self,
        cid: Cid,
        pin: bool,
        replication: bool,
        api_request: Option<RequestId>,
        now: u64,
    ) -> Vec<Output> {
        let mut out = Vec::new();
        let fresh = !self.wants.contains_key(&cid);
        let want = self.wants.entry(cid).or_default();
        want.pin |= pin;
        want.replication |= replication;
        if let Some(id) = api_request {
            want.api_requests.push(id);
        }
        if fresh {
            want.deadline = now + self.cfg.response_timeout_ms;
            out.extend(self.broadcast_want(cid, now));
        }
        out
    }

    fn broadcast_want(&mut self, cid: Cid, now: u64) -> Vec<Output> {
        let conns: Vec<ConnId> = self.authenticated_conns();
        let Some(want) = self.wants.get_mut(&cid) else { return Vec::new() };
        want.broadcast = true;
        want.deadline = now + self.cfg.response_timeout_ms;
        let mut out = Vec::new();
        for conn in conns {
            if want.asked.insert(conn) {
                out.push(Output::Send { conn, msg: Message::Want { cid } });
            }
        }
        if out.is_empty() {
            out.extend(self.maybe_fail_want(cid, now));
        }
        out
    }

    fn maybe_fail_want(&mut self, cid: Cid, now: u64) -> Vec<Output> {
        let Some(want) = self.wants.get(&cid) else { return Vec::new() };
        let everyone_answered =
            want.broadcast && want.asked.iter().all(|c| want.missing_from.contains(c));
        let expired = now >= want.deadline;
        if !(everyone_answered || expired) {
            return Vec::new();
        }
        let mut out = Vec::new();
        if want.replication {
            // Keep the want alive; retry against current peers next tick.
            let want = self.wants.get_mut(&cid).expect("checked above");
            let requests = std::mem::take(&mut want.api_requests);
            want.asked.clear();
            want.missing_from.clear();
            want.broadcast = false;
            want.deadline = now + self.cfg.response_timeout_ms;
            for request_id in requests {
                out.push(Output::Event(NodeEvent::FetchCompleted {
                    request_id,
                    result: Err(FetchFailure::NotFoundAnywhere),
                }));
            }
        } else if let Some(want) = self.wants.remove(&cid) {
            for request_id in want.api_requests {
                out.push(Output::Event(NodeEvent::FetchCompleted {
                    request_id,
                    result: Err(FetchFailure::NotFoundAnywhere),
                }));
            }
        }
        out
    }

    // ------------------------------------------------------------------
    // Validation protocol
    // ------------------------------------------------------------------

    fn on_validation_query(&mut self, conn: ConnId, subject: Cid) -> Vec<Output> {
        // Answer with whatever we currently have. Never waits for a running
        // validation task.
        let record = self.validations.get(&subject, &self.cfg.validator.validator_id).cloned();
        vec![Output::Send { conn, msg: Message::ValidationResponse { subject_cid: subject, record } }]
    }

    fn on_validation_response(
        &mut self,
        conn: ConnId,
        subject: Cid,
        record: Option<ValidationRecord>,
        now: u64,
    ) -> Vec<Output> {
        let Some(peer) = self.sessions.get(&conn).and_then(|s| s.peer) else {
            return Vec::new();
        };
        let Some(round) = self.vote_rounds.get_mut(&subject) else { return Vec::new() };
        if !round.responders.insert(peer) {
            return Vec::new(); // one peer, one vote
        }
        if let Some(record) = record {
            if record.subject_cid == subject {
                round.responses.push(record);
            }
        }
        let have_enough = round.responses.len() >= self.cfg.vote_policy.k_required as usize;
        let all_answered = round.responders.len() >= round.asked;
        if have_enough || all_answered {
            return self.conclude_vote(subject, now);
        }
        Vec::new()
    }

    /// Ask every connected peer for its verdict on `subject` and consolidate
    /// the answers (or conclude early once `k_required` arrive).
    pub fn begin_network_validation(&mut self, subject: Cid, now: u64) -> Vec<Output> {
        if self.vote_rounds.contains_key(&subject) {
            return Vec::new();
        }
        let conns = self.authenticated_conns();
        let mut out = Vec::new();
        self.vote_rounds.insert(
            subject,
            VoteRound {
                responses: Vec::new(),
                responders: BTreeSet::new(),
                asked: conns.len(),
                deadline: now + self.cfg.vote_policy.response_timeout_ms,
            },
        );
        for conn in conns {
            out.push(Output::Send { conn, msg: Message::ValidationQuery { subject_cid: subject } });
        }
        if out.is_empty() {
            // No peers at all: conclude immediately with zero responses.
            out.extend(self.conclude_vote(subject, now));
        }
        out
    }

    fn conclude_vote(&mut self, subject: Cid, now: u64) -> Vec<Output> {
        let Some(round) = self.vote_rounds.remove(&subject) else { return Vec::new() };
        let outcome = consolidate_votes(&round.responses, &self.cfg.vote_policy)
            .expect("round collects a single subject");
        self.network_verdicts.insert(subject, outcome);
        let mut out = vec![Output::Event(NodeEvent::VoteDecided {
            subject,
            outcome,
            responses: round.responses.len(),
        })];
        if let VoteOutcome::MustValidateIndependently { .. } = outcome {
            // Fall back to our own pipeline when the block is here; the own
            // verdict then takes precedence locally.
            if self.store.contains(&subject) {
                if let (Ok(ScheduleOutcome::Started), mut schedule_out) =
                    self.schedule_validation_inner(subject, now)
                {
                    out.append(&mut schedule_out);
                }
            }
        }
        out
    }

    /// Queue an asynchronous validation of a locally held block. Concurrent
    /// schedules for the same subject coalesce into one running task.
    pub fn schedule_validation(
        &mut self,
        subject: Cid,
        now: u64,
    ) -> (Result<ScheduleOutcome, ScheduleError>, Vec<Output>) {
        if !self.store.contains(&subject) {
            return (Err(ScheduleError::NotFound(subject)), Vec::new());
        }
        let (outcome, out) = self.schedule_validation_inner(subject, now);
        (outcome, out)
    }

    fn schedule_validation_inner(
        &mut self,
        subject: Cid,
        _now: u64,
    ) -> (Result<ScheduleOutcome, ScheduleError>, Vec<Output>) {
        if !self.inflight_validations.insert(subject) {
            return (Ok(ScheduleOutcome::Coalesced), Vec::new());
        }
        (Ok(ScheduleOutcome::Started), vec![Output::StartValidation { subject }])
    }

    /// Deliver the result of a validation task started via
    /// [`Output::StartValidation`].
    pub fn complete_validation(&mut self, record: ValidationRecord, _now: u64) -> Vec<Output> {
        self.inflight_validations.remove(&record.subject_cid);
        self.validations.record(record.clone());
        vec![Output::Event(NodeEvent::ValidationRecorded { record })]
    }

    /// Run the configured validator synchronously (used by drivers for the
    /// actual task body; also the pre-publication check).
    pub fn run_validator(&self, subject: Cid, bytes: &[u8], now: u64) -> ValidationRecord {
        validate_local(subject, bytes, &self.cfg.validator, &self.cfg.range_rules, now)
            .expect("caller passes matching bytes")
    }

    // ------------------------------------------------------------------
    // Gossip and timers
    // ------------------------------------------------------------------

    /// Periodic anti-entropy: every `gossip_interval_ms`, send our heads to
    /// `fan_out` random connected peers.
    pub fn gossip_tick(&mut self, now: u64) -> Vec<Output> {
        if now < self.next_gossip_at {
            return Vec::new();
        }
        self.next_gossip_at = now + self.cfg.gossip_interval_ms;
        let conns = self.authenticated_conns();
        if conns.is_empty() {
            return Vec::new();
        }
        let count = self.cfg.fan_out.min(conns.len());
        let chosen = rand::seq::index::sample(&mut self.rng, conns.len(), count);
        let heads: Vec<Cid> = self.log.heads().iter().copied().collect();
        chosen
            .into_iter()
            .map(|i| Output::Send {
                conn: conns[i],
                msg: Message::Heads {
                    log_id: self.log.log_id().to_string(),
                    head_cids: heads.clone(),
                },
            })
            .collect()
    }

    /// Drive all time-based behavior: gossip, handshake expiry, want
    /// retries/failures, entry re-requests and vote deadlines.
    pub fn tick(&mut self, now: u64) -> Vec<Output> {
        let mut out = self.gossip_tick(now);

        // Handshakes that never completed.
        let handshake_deadline = self.cfg.response_timeout_ms * HANDSHAKE_TIMEOUT_FACTOR;
        let stale: Vec<ConnId> = self
            .sessions
            .iter()
            .filter(|(_, s)| {
                s.phase != SessionPhase::Authenticated
                    && now.saturating_sub(s.created_at) > handshake_deadline
            })
            .map(|(c, _)| *c)
            .collect();
        for conn in stale {
            out.push(Output::Close { conn, reason: CloseReason::HandshakeTimeout });
            out.extend(self.on_connection_closed(conn, now));
        }

        // Entry fetches that went unanswered: go wide.
        let expired_entries: Vec<Cid> = self
            .requested_entries
            .iter()
            .filter(|(_, deadline)| now >= **deadline)
            .map(|(c, _)| *c)
            .collect();
        if !expired_entries.is_empty() {
            for cid in &expired_entries {
                self.requested_entries.insert(*cid, now + self.cfg.response_timeout_ms);
            }
            for conn in self.authenticated_conns() {
                out.push(Output::Send {
                    conn,
                    msg: Message::FetchEntries { cids: expired_entries.clone() },
                });
            }
        }

        // Want deadlines.
        let due: Vec<Cid> = self
            .wants
            .iter()
            .filter(|(_, w)| now >= w.deadline)
            .map(|(c, _)| *c)
            .collect();
        for cid in due {
            let broadcast = self.wants.get(&cid).map(|w| w.broadcast).unwrap_or(false);
            if broadcast {
                out.extend(self.maybe_fail_want(cid, now));
                // Replication wants survive the failure path; re-ask.
                if self.wants.contains_key(&cid) {
                    out.extend(self.broadcast_want(cid, now));
                }
            } else {
                out.extend(self.broadcast_want(cid, now));
            }
        }

        // Vote rounds past their response window.
        let expired_votes: Vec<Cid> = self
            .vote_rounds
            .iter()
            .filter(|(_, r)| now >= r.deadline)
            .map(|(c, _)| *c)
            .collect();
        for subject in expired_votes {
            out.extend(self.conclude_vote(subject, now));
        }

        out
    }

    fn authenticated_conns(&self) -> Vec<ConnId> {
        self.sessions
            .iter()
            .filter(|(_, s)| s.phase == SessionPhase::Authenticated)
            .map(|(c, _)| *c)
            .collect()
    }

    fn check_bootstrap(&mut self, now: u64) -> Vec<Output> {
        let Some(bs) = &self.bootstrap else { return Vec::new() };
        if bs.completed {
            return Vec::new();
        }
        let Some(snapshot) = &bs.snapshot else { return Vec::new() };
        let heads_caught_up = snapshot.iter().all(|h| self.log.contains(h));
        if heads_caught_up && self.pending_entries.is_empty() && self.incomplete.is_empty() {
            let elapsed_ms = now - bs.started_at;
            if let Some(bs) = &mut self.bootstrap {
                bs.completed = true;
            }
            return vec![Output::Event(NodeEvent::BootstrapCompleted { elapsed_ms })];
        }
        Vec::new()
    }

    pub fn bootstrap_completed(&self) -> bool {
        self.bootstrap.as_ref().map(|b| b.completed).unwrap_or(false)
    }

    // ------------------------------------------------------------------
    // Local operations (API surface)
    // ------------------------------------------------------------------

    /// The contribute pipeline: validate, store, append, announce.
    ///
    /// With `share` the record is validated pre-publication (an invalid
    /// verdict blocks publication unless `force`), the contribution is
    /// appended to the log and pushed eagerly to all connected peers.
    /// Without `share` the payload is stored, deny-listed and never
    /// announced; the cid is returned for local use.
    pub fn contribute(
        &mut self,
        record: &PerformanceRecord,
        attributes: BTreeMap<String, String>,
        share: bool,
        force: bool,
        now: u64,
    ) -> (Result<ContributeOutcome, ContributeError>, Vec<Output>) {
        if let Err(e) = record.validate() {
            return (Err(e.into()), Vec::new());
        }
        let data_bytes = Bytes::from(record.canonical_bytes());
        let data_cid = Cid::for_bytes(&data_bytes);

        if !share {
            if let Err(e) = self.store.put_block(data_bytes, BlockOrigin::Local) {
                return (Err(e.into()), Vec::new());
            }
            self.deny.insert(data_cid);
            self.persist_deny();
            return (Ok(ContributeOutcome::Private { data_cid }), Vec::new());
        }

        let contribution = Contribution { data_cid, attributes, created_at: now };
        if let Err(e) = contribution.validate() {
            return (Err(e.into()), Vec::new());
        }

        // Pre-publication validation; the verdict lands in the validations
        // store either way.
        let verdict_record = self.run_validator(data_cid, &data_bytes, now);
        let verdict = verdict_record.verdict;
        let detail = verdict_record.detail.clone();
        self.validations.record(verdict_record.clone());
        let mut out =
            vec![Output::Event(NodeEvent::ValidationRecorded { record: verdict_record })];
        if verdict == Verdict::Invalid && !force {
            return (Err(ContributeError::ValidationFailedPrePublish { verdict, detail }), out);
        }

        if let Err(e) = self.store.put_block(data_bytes.clone(), BlockOrigin::Local) {
            return (Err(e.into()), out);
        }
        let contrib_bytes = Bytes::from(contribution.canonical_bytes());
        let contrib_cid = match self.store.put_block(contrib_bytes.clone(), BlockOrigin::Local) {
            Ok(c) => c,
            Err(e) => return (Err(e.into()), out),
        };
        let entry = match self.log.append(self.cfg.peer_id, contrib_cid, &self.store) {
            Ok(e) => e,
            Err(e) => return (Err(e.into()), out),
        };
        let entry_bytes = Bytes::from(entry.canonical_encoding().into_bytes());
        if let Err(e) = self.store.put_block(entry_bytes, BlockOrigin::Local) {
            return (Err(e.into()), out);
        }
        self.persist_heads();

        self.tracked.insert(
            entry.id(),
            TrackedContribution {
                contribution: Some(contribution.clone()),
                data_present: true,
                completed: true,
            },
        );

        out.push(Output::Event(NodeEvent::ContributionAppended {
            entry_id: entry.id(),
            contribution: contribution.clone(),
        }));
        out.push(Output::Event(NodeEvent::ContributionComplete {
            entry_id: entry.id(),
            data_cid,
        }));

        // Eager push: entry plus both payload blocks to every session, so a
        // fresh contribution replicates in a single hop. Periodic gossip
        // covers anyone who missed it.
        for conn in self.authenticated_conns() {
            out.push(Output::Send {
                conn,
                msg: Message::Entries { entries: vec![entry.canonical_encoding()] },
            });
            out.push(Output::Send {
                conn,
                msg: Message::Block { cid: contrib_cid, bytes: BlockBytes(contrib_bytes.clone()) },
            });
            out.push(Output::Send {
                conn,
                msg: Message::Block { cid: data_cid, bytes: BlockBytes(data_bytes.clone()) },
            });
        }

        (
            Ok(ContributeOutcome::Shared { entry_id: entry.id(), data_cid, contribution }),
            out,
        )
    }

    /// Fetch a block for an API caller: local hit resolves immediately,
    /// otherwise a broadcast want with `NotFoundAnywhere` on failure.
    pub fn request_block(
        &mut self,
        cid: Cid,
        pin: Option<bool>,
        request_id: RequestId,
        now: u64,
    ) -> Vec<Output> {
        let pin = pin.unwrap_or(match self.cfg.pin_policy {
            PinPolicy::PinAllContributions | PinPolicy::PinOnUse => true,
            PinPolicy::PinNone => false,
        });
        if self.store.contains(&cid) {
            return match self.store.get_block(&cid) {
                Ok(bytes) => {
                    if pin {
                        let _ = self.store.set_pin(&cid, true);
                    }
                    vec![Output::Event(NodeEvent::FetchCompleted { request_id, result: Ok(bytes) })]
                }
                Err(_) => self.want_block(cid, pin, false, Some(request_id), now),
            };
        }
        self.want_block(cid, pin, false, Some(request_id), now)
    }

    /// Contributions in log order, filtered by attribute equality and the
    /// validity policy. Triggers no network activity.
    pub fn query(&self, filter: &BTreeMap<String, String>, validity: ValidityPolicy) -> Vec<QueryRow> {
        let own_validator = &self.cfg.validator.validator_id;
        let mut rows = Vec::new();
        for entry in self.log.total_order() {
            let Some(tracked) = self.tracked.get(&entry.id()) else { continue };
            let Some(contribution) = &tracked.contribution else { continue };
            if !contribution.matches(filter) {
                continue;
            }
            let own_verdict =
                self.validations.get(&contribution.data_cid, own_validator).map(|r| r.verdict);
            let network_valid = self
                .network_verdicts
                .get(&contribution.data_cid)
                .map(|o| *o == VoteOutcome::NetworkValid);
            let include = match validity {
                ValidityPolicy::Any => true,
                ValidityPolicy::OwnValidOnly => own_verdict == Some(Verdict::Valid),
                ValidityPolicy::NetworkOrOwnValid => match own_verdict {
                    // An own verdict takes precedence over the network's.
                    Some(v) => v == Verdict::Valid,
                    None => network_valid == Some(true),
                },
            };
            if include {
                rows.push(QueryRow {
                    entry_id: entry.id(),
                    contribution: contribution.clone(),
                    available_locally: self.store.contains(&contribution.data_cid),
                    own_verdict,
                    network_valid,
                });
            }
        }
        rows
    }

    /// Locally held private performance records (deny-listed payloads).
    pub fn private_records(&mut self) -> Vec<(Cid, PerformanceRecord)> {
        let cids: Vec<Cid> = self.deny.iter().copied().collect();
        let mut records = Vec::new();
        for cid in cids {
            let Ok(bytes) = self.store.get_block(&cid) else { continue };
            if let Ok(record) = PerformanceRecord::parse(&bytes) {
                records.push((cid, record));
            }
        }
        records
    }

    pub fn status(&self) -> StatusSnapshot {
        StatusSnapshot {
            peer_id: self.cfg.peer_id,
            region: self.cfg.region.clone(),
            peer_count: self.by_peer.len(),
            known_peers: self.known_peers.len(),
            block_count: self.store.block_count(),
            store_bytes: self.store.total_bytes(),
            log_len: self.log.len(),
            heads: self.log.heads().iter().copied().collect(),
            contribution_count: self.tracked.values().filter(|t| t.contribution.is_some()).count(),
            validation_count: self.validations.len(),
            pending_wants: self.wants.len(),
        }
    }
}

fn atomic_write(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peer_protocol::derive_network_key;

    fn test_engine(seed: u64) -> Engine {
        let key = derive_network_key("pw");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let peer_id = PeerId::generate(&mut rng);
        let mut cfg = EngineConfig::new(peer_id, "europe-west3", key);
        cfg.rng_seed = seed;
        cfg.listen_address = format!("sim:{peer_id}");
        Engine::new(cfg, ContentStore::in_memory(), ValidationsStore::in_memory())
    }

    #[test]
    fn fingerprints_differ_after_contribution() {
        let mut e = test_engine(1);
        let before = e.fingerprint();
        let record = crate::modeling::synthetic_record("sort", "spark", 4, 1000);
        let attrs = crate::modeling::default_attributes("gcp", "europe-west3");
        let (outcome, _) = e.contribute(&record, attrs, true, false, 5);
        outcome.unwrap();
        assert_ne!(before, e.fingerprint());
    }
}
