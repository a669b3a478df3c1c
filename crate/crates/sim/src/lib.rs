//! Deterministic discrete-event simulator for the peerperfnet protocol.
//!
//! The simulator drives the exact same [`peerperfnet_core::engine::Engine`]
//! state machines as the real daemon; only the transport and the clock are
//! virtual. Scenarios cover file transfer, churn (fuzz), replication bursts,
//! bootstrap scaling and validation cost scaling.

mod driver;
pub mod metrics;
pub mod network;
pub mod scenario;

pub use driver::{report_converged, run_scenario};
pub use metrics::{replay_check, MetricsReport, Summary};
pub use network::{default_region_matrix, NetworkModel, REGIONS};
pub use scenario::{Scenario, ScenarioError, ScenarioKind, Topology};
