//! The seeded discrete-event simulation.
//!
//! One [`run_scenario`] call drives real protocol engines over a virtual
//! network. Events are ordered by (time, sequence); all randomness flows
//! from ChaCha generators seeded by the scenario, so a (scenario, seed) pair
//! always produces a byte-identical report.
//!
//! Timing model per message: the sender's egress link serializes frames at
//! `bandwidth_bps`; delivery adds the region-pair one-way latency plus
//! uniform jitter; the receiver processes frames one at a time, each taking
//! `processing_ms`. Frames on one connection stay in order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use peerperfnet_core::cid::Cid;
use peerperfnet_core::content_store::ContentStore;
use peerperfnet_core::data_stores::{PerformanceRecord, ValidationsStore};
use peerperfnet_core::engine::{
    ConnId, ContributeOutcome, Engine, EngineConfig, NodeEvent, Output,
};
use peerperfnet_core::modeling::synthetic_record;
use peerperfnet_core::peer_protocol::{derive_network_key, wire_size, Message, PeerId};
use peerperfnet_core::validation::validation_cost;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metrics::{
    compute_summary, EventRow, MetricsReport, EV_BOOTSTRAP_DONE, EV_CONTRIBUTION_APPENDED,
    EV_CONTRIBUTION_COMPLETE, EV_JOIN_STARTED, EV_PEER_DOWN, EV_PEER_UP, EV_VALIDATION_COST,
    EV_VOTE_RESPONSE_LATENCY,
};
use crate::scenario::{Scenario, ScenarioError, ScenarioKind, Topology};

const TICK_INTERVAL_MS: u64 = 250;
/// Index of the peer that runs the long validation in scaling scenarios.
const HEAVY_VALIDATION_PEER: usize = 1;
const HEAVY_VALIDATION_POINTS: u64 = 1000;

#[derive(Debug)]
enum Ev {
    /// Frame arrival at the receiver's NIC.
    Deliver { conn: ConnId, msg: Message },
    /// Frame leaves the receiver's processing queue; the engine runs now.
    Process { peer: usize, conn: ConnId, msg: Message },
    Tick { peer: usize },
    Join { peer: usize },
    Contribute { peer: usize, size: u32 },
    ChurnDown,
    ChurnUp { peer: usize },
    ValidationDone { peer: usize, subject: Cid },
    /// Pure cost accounting for the scaling study.
    ValidationRun { n: u64, batched: bool },
    KickValidations,
    KickVoteProbe,
}

struct Queued {
    time_ns: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time_ns == other.time_ns && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time_ns, self.seq).cmp(&(other.time_ns, other.seq))
    }
}

struct Link {
    remote_peer: usize,
    remote_conn: ConnId,
}

struct Sim {
    scenario: Scenario,
    engines: Vec<Engine>,
    region_of: Vec<usize>,
    alive: Vec<bool>,
    links: BTreeMap<ConnId, Link>,
    conn_owner: BTreeMap<ConnId, usize>,
    connected_pairs: BTreeSet<(usize, usize)>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now_ns: u64,
    pending_real: usize,
    next_conn: ConnId,
    egress_free_ns: Vec<u64>,
    proc_free_ns: Vec<u64>,
    conn_fifo_ns: BTreeMap<ConnId, u64>,
    rng: ChaCha8Rng,
    events: Vec<EventRow>,
    contribution_seq: u64,
    first_data_cid: Option<Cid>,
    vote_probe: Option<(usize, Cid, u64)>,
    ticking: Vec<bool>,
}

impl Sim {
    fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let n = scenario.peer_count();
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let key = derive_network_key("simnet");
        let mut engines = Vec::with_capacity(n);
        let mut region_of = Vec::with_capacity(n);
        for (i, region) in scenario.peer_regions.iter().enumerate() {
            let peer_id = PeerId::generate(&mut rng);
            let mut cfg = EngineConfig::new(peer_id, region.clone(), key.clone());
            cfg.listen_address = format!("sim:{i}");
            cfg.rng_seed = scenario.seed.wrapping_mul(0x9e3779b9).wrapping_add(i as u64);
            cfg.gossip_interval_ms = scenario.gossip_interval_ms;
            cfg.fan_out = scenario.fan_out;
            cfg.response_timeout_ms = scenario.response_timeout_ms;
            cfg.vote_policy = scenario.vote_policy;
            engines.push(Engine::new(cfg, ContentStore::in_memory(), ValidationsStore::in_memory()));
            region_of.push(scenario.network.region_index(region).expect("validated"));
        }
        Ok(Sim {
            alive: vec![false; n],
            ticking: vec![false; n],
            egress_free_ns: vec![0; n],
            proc_free_ns: vec![0; n],
            engines,
            region_of,
            links: BTreeMap::new(),
            conn_owner: BTreeMap::new(),
            connected_pairs: BTreeSet::new(),
            queue: BinaryHeap::new(),
            seq: 0,
            now_ns: 0,
            pending_real: 0,
            next_conn: 0,
            conn_fifo_ns: BTreeMap::new(),
            rng,
            events: Vec::new(),
            contribution_seq: 0,
            first_data_cid: None,
            vote_probe: None,
            scenario,
        })
    }

    fn push(&mut self, time_ns: u64, ev: Ev) {
        if !matches!(ev, Ev::Tick { .. }) {
            self.pending_real += 1;
        }
        self.seq += 1;
        self.queue.push(Reverse(Queued { time_ns, seq: self.seq, ev }));
    }

    fn now_ms(&self) -> u64 {
        self.now_ns / 1_000_000
    }

    fn record(&mut self, peer: usize, kind: &str, subject: String, value: f64) {
        self.events.push(EventRow { time_ns: self.now_ns, peer, kind: kind.to_string(), subject, value });
    }

    fn schedule_tick(&mut self, peer: usize, at_ns: u64) {
        if !self.ticking[peer] {
            self.ticking[peer] = true;
            self.push(at_ns, Ev::Tick { peer });
        }
    }

    /// Open a bidirectional connection (two conn ids, one per side).
    fn dial(&mut self, from: usize, to: usize) -> Option<ConnId> {
        let pair = (from.min(to), from.max(to));
        if from == to || !self.alive[from] || !self.alive[to] || self.connected_pairs.contains(&pair)
        {
            return None;
        }
        self.connected_pairs.insert(pair);
        let a = self.next_conn;
        let b = self.next_conn + 1;
        self.next_conn += 2;
        self.links.insert(a, Link { remote_peer: to, remote_conn: b });
        self.links.insert(b, Link { remote_peer: from, remote_conn: a });
        self.conn_owner.insert(a, from);
        self.conn_owner.insert(b, to);
        let now = self.now_ms();
        let out_a = self.engines[from].on_connection_opened(a, true, now);
        let out_b = self.engines[to].on_connection_opened(b, false, now);
        self.dispatch(from, out_a);
        self.dispatch(to, out_b);
        Some(a)
    }

    fn close_conn(&mut self, conn: ConnId) {
        let Some(link) = self.links.remove(&conn) else { return };
        let owner = self.conn_owner.remove(&conn).expect("owner tracked");
        self.links.remove(&link.remote_conn);
        self.conn_owner.remove(&link.remote_conn);
        self.connected_pairs.remove(&(owner.min(link.remote_peer), owner.max(link.remote_peer)));
        let now = self.now_ms();
        let out_owner = self.engines[owner].on_connection_closed(conn, now);
        let out_remote = self.engines[link.remote_peer].on_connection_closed(link.remote_conn, now);
        self.dispatch(owner, out_owner);
        self.dispatch(link.remote_peer, out_remote);
    }

    fn dispatch(&mut self, owner: usize, outputs: Vec<Output>) {
        for output in outputs {
            match output {
                Output::Send { conn, msg } => self.send(owner, conn, msg),
                Output::Close { conn, .. } => self.close_conn(conn),
                Output::StartValidation { subject } => {
                    let heavy = self.scenario.kind == ScenarioKind::ValidationScaling
                        && owner == HEAVY_VALIDATION_PEER;
                    let n = if heavy { HEAVY_VALIDATION_POINTS } else { 1 };
                    let cost_ms = validation_cost(&self.scenario.cost_model, n, heavy);
                    let done_at = self.now_ns + (cost_ms * 1e6) as u64;
                    self.push(done_at, Ev::ValidationDone { peer: owner, subject });
                }
                Output::Event(event) => self.on_node_event(owner, event),
            }
        }
    }

    fn send(&mut self, from: usize, conn: ConnId, msg: Message) {
        let Some(link) = self.links.get(&conn) else { return };
        let to_conn = link.remote_conn;
        let size_bits = (wire_size(&msg) as u64) * 8;
        let transmit_ns = size_bits * 1_000_000_000 / self.scenario.network.bandwidth_bps;
        let depart = self.now_ns.max(self.egress_free_ns[from]) + transmit_ns;
        self.egress_free_ns[from] = depart;

        let to_peer = link.remote_peer;
        let base_latency = self.scenario.network.latency_ns(self.region_of[from], self.region_of[to_peer]);
        let jitter_bound = (self.scenario.network.jitter_ms * 1e6) as i64;
        let jitter = if jitter_bound > 0 {
            self.rng.gen_range(-jitter_bound..=jitter_bound)
        } else {
            0
        };
        let latency = (base_latency as i64 + jitter).max(0) as u64;
        let mut arrival = depart + latency;

        // TCP-like: deliveries on one connection never reorder.
        let fifo = self.conn_fifo_ns.entry(to_conn).or_insert(0);
        if arrival <= *fifo {
            arrival = *fifo + 1;
        }
        *fifo = arrival;
        self.push(arrival, Ev::Deliver { conn: to_conn, msg });
    }

    fn on_node_event(&mut self, owner: usize, event: NodeEvent) {
        match event {
            NodeEvent::ContributionAppended { entry_id, contribution } => {
                let size =
                    self.engines[owner].store().block_len(&contribution.data_cid).unwrap_or(0);
                self.record(owner, EV_CONTRIBUTION_APPENDED, entry_id.to_string(), size as f64);
            }
            NodeEvent::ContributionComplete { entry_id, .. } => {
                self.record(owner, EV_CONTRIBUTION_COMPLETE, entry_id.to_string(), 0.0);
            }
            NodeEvent::BootstrapCompleted { elapsed_ms } => {
                self.record(owner, EV_BOOTSTRAP_DONE, "-".to_string(), elapsed_ms as f64);
            }
            NodeEvent::PeersDiscovered { contacts } => {
                if self.scenario.auto_dial {
                    for contact in contacts {
                        if let Some(idx) = contact
                            .address
                            .strip_prefix("sim:")
                            .and_then(|s| s.parse::<usize>().ok())
                        {
                            self.dial(owner, idx);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Deliver-side half of the processing model: queue the frame behind the
    /// receiver's per-message processing delay.
    fn deliver(&mut self, conn: ConnId, msg: Message) {
        let Some(&owner) = self.conn_owner.get(&conn) else { return }; // conn died in flight
        let start = self.now_ns.max(self.proc_free_ns[owner]);
        let done = start + (self.scenario.processing_ms * 1e6) as u64;
        self.proc_free_ns[owner] = done;
        self.push(done, Ev::Process { peer: owner, conn, msg });
    }

    fn process(&mut self, peer: usize, conn: ConnId, msg: Message) {
        if !self.links.contains_key(&conn) {
            return; // closed while queued
        }
        if let Some((probe_peer, subject, started_ns)) = self.vote_probe {
            if peer == probe_peer {
                if let Message::ValidationResponse { subject_cid, .. } = &msg {
                    if *subject_cid == subject {
                        let latency_ms = (self.now_ns - started_ns) as f64 / 1e6;
                        self.record(peer, EV_VOTE_RESPONSE_LATENCY, subject.to_string(), latency_ms);
                    }
                }
            }
        }
        let now = self.now_ms();
        let out = self.engines[peer].handle_message(conn, msg, now);
        self.dispatch(peer, out);
    }

    fn contribute(&mut self, peer: usize, size: u32) {
        // A down submitter hands the upload to the next live peer, so the
        // workload never silently shrinks under churn.
        let peer = match (0..self.engines.len()).map(|i| (peer + i) % self.engines.len()).find(|p| self.alive[*p]) {
            Some(p) => p,
            None => return,
        };
        self.contribution_seq += 1;
        let record = self.sized_record(size);
        let mut attributes = peerperfnet_core::modeling::default_attributes(
            "gcp",
            &self.scenario.peer_regions[peer].clone(),
        );
        attributes.insert("submitter_region".into(), self.scenario.peer_regions[peer].clone());
        let now = self.now_ms();
        let (outcome, out) = self.engines[peer].contribute(&record, attributes, true, false, now);
        match outcome {
            Ok(ContributeOutcome::Shared { data_cid, .. }) => {
                if self.first_data_cid.is_none() {
                    self.first_data_cid = Some(data_cid);
                }
            }
            Ok(_) => {}
            Err(e) => log::error!("simulated contribution failed: {e}"),
        }
        self.dispatch(peer, out);
    }

    /// A record padded so its canonical encoding is exactly `target` bytes
    /// (when the base record is smaller). The padding lands in an unused
    /// descriptive field; uniqueness comes from the sequence metric.
    fn sized_record(&mut self, target: u32) -> PerformanceRecord {
        let runtime_ms = self.rng.gen_range(30_000u64..7_200_000);
        let nodes = *[2u32, 4, 8, 16, 32].get(self.rng.gen_range(0..5)).unwrap();
        let mut record = synthetic_record("sort", "spark", nodes, runtime_ms);
        record.extra_metrics.insert("seq".to_string(), self.contribution_seq as f64);
        let base = record.canonical_bytes().len();
        if (target as usize) > base {
            let pad = target as usize - base;
            record.framework_version = format!("3.1{}", "x".repeat(pad.saturating_sub(0)));
            // Adding to framework_version adds exactly one byte per char,
            // but the base already contained "3.1"; rebuild precisely.
            let overshoot = record.canonical_bytes().len() as i64 - target as i64;
            if overshoot > 0 {
                let keep = record.framework_version.len() as i64 - overshoot;
                record.framework_version.truncate(keep.max(3) as usize);
            }
        }
        record
    }

    fn churn_down(&mut self) {
        // Pick a random non-root peer among the alive ones.
        let candidates: Vec<usize> = (1..self.engines.len()).filter(|p| self.alive[*p]).collect();
        if candidates.is_empty() {
            return;
        }
        let victim = candidates[self.rng.gen_range(0..candidates.len())];
        self.alive[victim] = false;
        self.record(victim, EV_PEER_DOWN, "-".to_string(), 0.0);
        let victim_conns: Vec<ConnId> = self
            .conn_owner
            .iter()
            .filter(|(_, owner)| **owner == victim)
            .map(|(c, _)| *c)
            .collect();
        for conn in victim_conns {
            self.close_conn(conn);
        }
        self.push(self.now_ns + self.scenario.churn.down_ms * 1_000_000, Ev::ChurnUp { peer: victim });
    }

    fn churn_up(&mut self, peer: usize) {
        self.alive[peer] = true;
        self.record(peer, EV_PEER_UP, "-".to_string(), 0.0);
        self.schedule_tick(peer, self.now_ns + 1_000_000);
        for other in self.topology_neighbors(peer) {
            self.dial(peer, other);
        }
    }

    fn topology_neighbors(&mut self, peer: usize) -> Vec<usize> {
        let n = self.engines.len();
        match self.scenario.topology {
            Topology::FullMesh => (0..n).filter(|p| *p != peer).collect(),
            Topology::Star => {
                if peer == 0 {
                    (1..n).collect()
                } else {
                    vec![0]
                }
            }
            Topology::Random { .. } => self
                .random_topology_edges()
                .into_iter()
                .filter_map(|(a, b)| {
                    if a == peer {
                        Some(b)
                    } else if b == peer {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect(),
        }
    }

    /// Random connected graph: spanning tree plus extra edges, derived from
    /// the scenario seed only (stable across calls).
    fn random_topology_edges(&self) -> Vec<(usize, usize)> {
        let n = self.engines.len();
        let Topology::Random { extra_edges } = self.scenario.topology else {
            return Vec::new();
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.scenario.seed ^ 0x70706f6c);
        let mut edges = Vec::new();
        for v in 1..n {
            let parent = rng.gen_range(0..v);
            edges.push((parent, v));
        }
        for _ in 0..extra_edges {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && !edges.contains(&(a.min(b), a.max(b))) {
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges
    }

    fn setup(&mut self) {
        let n = self.engines.len();
        match self.scenario.kind {
            ScenarioKind::BootstrapScaling => {
                self.alive[0] = true;
                self.schedule_tick(0, TICK_INTERVAL_MS * 1_000_000);
                // Root is prepopulated before anyone joins.
                for _ in 0..self.scenario.prepopulate_files {
                    let size = self.scenario.file_size_mean;
                    self.contribute(0, size);
                }
                let mut t = 0u64;
                for (i, peer) in (1..n).enumerate() {
                    let gap = if (i as u32) < self.scenario.join_gap_switch {
                        self.scenario.join_gap_first_ms
                    } else {
                        self.scenario.join_gap_later_ms
                    };
                    t += gap;
                    self.push(t * 1_000_000, Ev::Join { peer });
                }
            }
            _ => {
                for p in 0..n {
                    self.alive[p] = true;
                    self.schedule_tick(p, TICK_INTERVAL_MS * 1_000_000);
                }
                let edges: Vec<(usize, usize)> = match self.scenario.topology {
                    Topology::FullMesh => {
                        (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect()
                    }
                    Topology::Star => (1..n).map(|b| (0, b)).collect(),
                    Topology::Random { .. } => self.random_topology_edges(),
                };
                for (a, b) in edges {
                    self.dial(a, b);
                }

                // Contribution workload.
                let sizes: Vec<u32> = if self.scenario.file_sizes.is_empty() {
                    let mean = self.scenario.file_size_mean as f64;
                    (0..self.scenario.file_count)
                        .map(|_| self.rng.gen_range((mean * 0.5) as u32..=(mean * 1.5) as u32))
                        .collect()
                } else {
                    self.scenario.file_sizes.clone()
                };
                let mut t = self.scenario.contributions_start_ms;
                for (i, size) in sizes.into_iter().enumerate() {
                    let submitter = if self.scenario.round_robin_submitters { i % n } else { 0 };
                    self.push(t * 1_000_000, Ev::Contribute { peer: submitter, size });
                    t += self.scenario.contribution_interval_ms;
                }

                if self.scenario.churn.enabled {
                    self.push(self.scenario.churn.start_ms * 1_000_000, Ev::ChurnDown);
                }

                if self.scenario.kind == ScenarioKind::ValidationScaling {
                    for n_points in self.scenario.validation_points.clone() {
                        self.push(500 * 1_000_000, Ev::ValidationRun { n: n_points, batched: true });
                        self.push(500 * 1_000_000, Ev::ValidationRun { n: n_points, batched: false });
                    }
                    self.push(5_000 * 1_000_000, Ev::KickValidations);
                    self.push(6_000 * 1_000_000, Ev::KickVoteProbe);
                }
            }
        }
    }

    fn converged(&self) -> bool {
        let mut heads: Option<&BTreeSet<Cid>> = None;
        for (p, engine) in self.engines.iter().enumerate() {
            if !self.alive[p] {
                continue;
            }
            match heads {
                None => heads = Some(engine.log().heads()),
                Some(h) => {
                    if engine.log().heads() != h {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn all_idle(&self) -> bool {
        self.engines.iter().enumerate().all(|(p, e)| !self.alive[p] || e.is_idle())
    }

    fn run(mut self) -> MetricsReport {
        self.setup();
        let duration_ns = self.scenario.duration_ms * 1_000_000;
        while let Some(Reverse(queued)) = self.queue.pop() {
            if queued.time_ns > duration_ns {
                break;
            }
            self.now_ns = queued.time_ns.max(self.now_ns);
            match queued.ev {
                Ev::Tick { peer } => {
                    // Quiescence: nothing in flight, engines idle, replicas
                    // agree, and no scheduled work remains.
                    if self.pending_real == 0 && self.all_idle() && self.converged() {
                        break;
                    }
                    self.ticking[peer] = false;
                    if self.alive[peer] {
                        let now = self.now_ms();
                        let out = self.engines[peer].tick(now);
                        self.dispatch(peer, out);
                        self.schedule_tick(peer, self.now_ns + TICK_INTERVAL_MS * 1_000_000);
                    }
                    continue;
                }
                ev => {
                    self.pending_real -= 1;
                    match ev {
                        Ev::Deliver { conn, msg } => self.deliver(conn, msg),
                        Ev::Process { peer, conn, msg } => self.process(peer, conn, msg),
                        Ev::Join { peer } => {
                            let cluster_size = self.alive.iter().filter(|a| **a).count();
                            self.alive[peer] = true;
                            self.record(peer, EV_JOIN_STARTED, "-".to_string(), cluster_size as f64);
                            self.schedule_tick(peer, self.now_ns + TICK_INTERVAL_MS * 1_000_000);
                            if let Some(conn) = self.dial(peer, 0) {
                                let now = self.now_ms();
                                self.engines[peer].begin_bootstrap(conn, now);
                            }
                        }
                        Ev::Contribute { peer, size } => self.contribute(peer, size),
                        Ev::ChurnDown => {
                            self.churn_down();
                            let next = self.now_ns + self.scenario.churn.interval_ms * 1_000_000;
                            if next <= self.scenario.churn.end_ms * 1_000_000 {
                                self.push(next, Ev::ChurnDown);
                            }
                        }
                        Ev::ChurnUp { peer } => self.churn_up(peer),
                        Ev::ValidationDone { peer, subject } => {
                            let bytes = match self.engines[peer].store_mut().get_block(&subject) {
                                Ok(b) => b,
                                Err(_) => continue,
                            };
                            let now = self.now_ms();
                            let record = self.engines[peer].run_validator(subject, &bytes, now);
                            let out = self.engines[peer].complete_validation(record, now);
                            self.dispatch(peer, out);
                        }
                        Ev::ValidationRun { n, batched } => {
                            let cost = validation_cost(&self.scenario.cost_model, n, batched);
                            let mode = if batched { "batched" } else { "unbatched" };
                            self.record(0, EV_VALIDATION_COST, format!("n={n},{mode}"), cost);
                        }
                        Ev::KickValidations => {
                            let Some(subject) = self.first_data_cid else { continue };
                            for peer in 1..self.engines.len() {
                                let now = self.now_ms();
                                let (_, out) = self.engines[peer].schedule_validation(subject, now);
                                self.dispatch(peer, out);
                            }
                        }
                        Ev::KickVoteProbe => {
                            let Some(subject) = self.first_data_cid else { continue };
                            self.vote_probe = Some((0, subject, self.now_ns));
                            let now = self.now_ms();
                            let out = self.engines[0].begin_network_validation(subject, now);
                            self.dispatch(0, out);
                        }
                        Ev::Tick { .. } => unreachable!(),
                    }
                }
            }
        }

        let converged = self.converged() && self.engines.iter().enumerate().all(|(p, e)| {
            !self.alive[p] || (e.log().heads().is_empty() || e.is_idle())
        });
        let summary = compute_summary(
            &format!("{:?}", self.scenario.kind),
            self.scenario.seed,
            &self.scenario.peer_regions,
            self.now_ns as f64 / 1e6,
            converged,
            &self.events,
        );
        MetricsReport { events: self.events, summary }
    }
}

/// Run a scenario to completion (quiescence or its duration limit) and
/// return the deterministic metrics report.
pub fn run_scenario(scenario: &Scenario) -> Result<MetricsReport, ScenarioError> {
    let sim = Sim::new(scenario.clone())?;
    Ok(sim.run())
}

/// True when every peer's log converged in the report's final state.
pub fn report_converged(report: &MetricsReport) -> bool {
    report.summary.converged
}
