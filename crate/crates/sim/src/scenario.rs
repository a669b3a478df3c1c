//! Scenario definitions: what the simulation runs, fully determined by the
//! scenario plus its seed.

use peerperfnet_core::validation::{CostModel, CostShape, VotePolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{default_region_matrix, NetworkModel, NetworkModelError, REGIONS};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario needs at least 2 peers")]
    TooFewPeers,
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("network model invalid: {0}")]
    Network(#[from] NetworkModelError),
    #[error("could not parse scenario: {0}")]
    Parse(String),
    #[error("could not read scenario: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Transmit differently sized files through the store and measure
    /// replication per size.
    Transfer,
    /// Transfer under random disconnects/reconnects; must still converge.
    Fuzz,
    /// Many contributions into a formed cluster; replication metrics.
    ReplicationBurst,
    /// Peers join one by one; bootstrap time vs cluster size.
    BootstrapScaling,
    /// Validation cost accounting and response-latency probing.
    ValidationScaling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    FullMesh,
    Star,
    /// Random connected graph: a random spanning tree plus `extra_edges`.
    Random { extra_edges: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChurnModel {
    pub enabled: bool,
    pub start_ms: u64,
    pub end_ms: u64,
    /// One random peer goes down every interval...
    pub interval_ms: u64,
    /// ...and comes back after this long.
    pub down_ms: u64,
}

impl Default for ChurnModel {
    fn default() -> Self {
        ChurnModel { enabled: false, start_ms: 1000, end_ms: 15_000, interval_ms: 700, down_ms: 900 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Region per peer; peer 0 is the root.
    pub peer_regions: Vec<String>,
    pub network: NetworkModel,
    pub topology: Topology,
    /// Dial peers learned from peer lists (bootstrap-style discovery).
    pub auto_dial: bool,

    /// Per-message processing delay at the receiving peer.
    pub processing_ms: f64,
    pub gossip_interval_ms: u64,
    pub fan_out: usize,
    pub response_timeout_ms: u64,
    pub vote_policy: VotePolicy,

    /// Hard stop; quiescence usually ends runs earlier.
    pub duration_ms: u64,

    // Contribution workload (transfer / fuzz / burst).
    pub file_count: u32,
    pub file_size_mean: u32,
    pub file_sizes: Vec<u32>,
    pub contribution_interval_ms: u64,
    pub contributions_start_ms: u64,
    /// Round-robin submitters instead of root-only.
    pub round_robin_submitters: bool,

    // Bootstrap scaling workload.
    pub join_count: u32,
    pub prepopulate_files: u32,
    pub join_gap_first_ms: u64,
    pub join_gap_later_ms: u64,
    /// Gap switches from first to later after this many joins.
    pub join_gap_switch: u32,

    // Validation scaling workload.
    pub cost_model: CostModel,
    pub validation_points: Vec<u64>,

    pub churn: ChurnModel,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            kind: ScenarioKind::Transfer,
            seed: 0,
            peer_regions: spread_regions(8),
            network: default_region_matrix(),
            topology: Topology::FullMesh,
            auto_dial: false,
            processing_ms: 0.1,
            gossip_interval_ms: 1000,
            fan_out: 4,
            response_timeout_ms: 2000,
            vote_policy: VotePolicy::default(),
            duration_ms: 120_000,
            file_count: 4,
            file_size_mean: 9060,
            file_sizes: Vec::new(),
            contribution_interval_ms: 50,
            contributions_start_ms: 5000,
            round_robin_submitters: false,
            join_count: 0,
            prepopulate_files: 0,
            join_gap_first_ms: 6000,
            join_gap_later_ms: 3000,
            join_gap_switch: 12,
            cost_model: CostModel { shape: CostShape::Linear { c0: 0.0, c1: 10.0 }, batch_overhead_ms: 5 },
            validation_points: vec![0, 1, 10, 100, 1000],
            churn: ChurnModel::default(),
        }
    }
}

/// Assign regions round-robin; peer 0 (the root) gets the first region.
pub fn spread_regions(peers: usize) -> Vec<String> {
    (0..peers).map(|i| REGIONS[i % REGIONS.len()].to_string()).collect()
}

impl Scenario {
    /// Transfer: one small cluster, a handful of differently sized files.
    pub fn transfer(seed: u64) -> Self {
        Scenario {
            kind: ScenarioKind::Transfer,
            seed,
            peer_regions: spread_regions(8),
            file_sizes: vec![1024, 10 * 1024, 100 * 1024, 1024 * 1024],
            file_count: 4,
            ..Scenario::default()
        }
    }

    /// Fuzz: a transfer workload with random disconnect/reconnect churn.
    pub fn fuzz(seed: u64) -> Self {
        Scenario {
            kind: ScenarioKind::Fuzz,
            seed,
            peer_regions: spread_regions(12),
            topology: Topology::Random { extra_edges: 6 },
            file_count: 16,
            contribution_interval_ms: 400,
            contributions_start_ms: 1000,
            round_robin_submitters: true,
            churn: ChurnModel { enabled: true, ..ChurnModel::default() },
            duration_ms: 180_000,
            ..Scenario::default()
        }
    }

    /// Replication burst: 32 peers, 1113 files of ~9060 bytes by default
    /// (one tenth of the full 11133-file run, which `full_scale` enables).
    pub fn replication_burst(seed: u64, full_scale: bool) -> Self {
        Scenario {
            kind: ScenarioKind::ReplicationBurst,
            seed,
            peer_regions: spread_regions(32),
            file_count: if full_scale { 11_133 } else { 1_113 },
            file_size_mean: 9060,
            contribution_interval_ms: 50,
            contributions_start_ms: 2000,
            duration_ms: if full_scale { 900_000 } else { 240_000 },
            ..Scenario::default()
        }
    }

    /// Bootstrap scaling: 52 peers join an initially root-only cluster, one
    /// region rotation per join; gaps compress the prototype's 60 s / 30 s
    /// schedule by 10x.
    pub fn bootstrap_scaling(seed: u64) -> Self {
        let mut regions = vec!["asia-east2".to_string()]; // the root
        // Rotation starts after the root's region so the first five joiners
        // open their regions and later joiners find a regional peer.
        for i in 0..52usize {
            regions.push(REGIONS[(i + 1) % REGIONS.len()].to_string());
        }
        Scenario {
            kind: ScenarioKind::BootstrapScaling,
            seed,
            peer_regions: regions,
            topology: Topology::Star,
            auto_dial: true,
            join_count: 52,
            prepopulate_files: 150,
            file_size_mean: 9060,
            join_gap_first_ms: 6000,
            join_gap_later_ms: 3000,
            join_gap_switch: 12,
            duration_ms: 400_000,
            ..Scenario::default()
        }
    }

    /// Validation scaling: cost accounting for one shape plus a
    /// response-latency probe while a heavy validation is in flight.
    pub fn validation_scaling(seed: u64, cost_model: CostModel) -> Self {
        Scenario {
            kind: ScenarioKind::ValidationScaling,
            seed,
            peer_regions: spread_regions(8),
            cost_model,
            file_count: 1,
            contributions_start_ms: 1000,
            duration_ms: 120_000,
            ..Scenario::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.peer_regions.len() < 2 {
            return Err(ScenarioError::TooFewPeers);
        }
        self.network.validate()?;
        for region in &self.peer_regions {
            if self.network.region_index(region).is_none() {
                return Err(ScenarioError::UnknownRegion(region.clone()));
            }
        }
        Ok(())
    }

    pub fn from_toml(body: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            toml::from_str(body).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn peer_count(&self) -> usize {
        self.peer_regions.len()
    }
}
