//! The modeled network: regions, one-way latencies, jitter and per-peer
//! egress bandwidth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six evaluation regions.
pub const REGIONS: [&str; 6] = [
    "asia-east2",
    "europe-west3",
    "us-west1",
    "south-america-east1",
    "me-west1",
    "australia-southeast1",
];

/// Default egress cap: 4 Gbit/s outgoing per peer.
pub const DEFAULT_BANDWIDTH_BPS: u64 = 4_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkModelError {
    #[error("latency matrix must be square over the region list")]
    BadShape,
    #[error("latency matrix must be symmetric")]
    Asymmetric,
    #[error("latencies must be positive")]
    NonPositiveLatency,
    #[error("bandwidth must be positive")]
    NoBandwidth,
}

/// Region-level network model. Latencies are one-way milliseconds; the
/// diagonal is the intra-region latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub regions: Vec<String>,
    pub latency_ms: Vec<Vec<f64>>,
    /// Uniform jitter bound: each delivery gets latency +- jitter.
    pub jitter_ms: f64,
    /// Egress cap per peer, bits per second.
    pub bandwidth_bps: u64,
}

impl NetworkModel {
    pub fn validate(&self) -> Result<(), NetworkModelError> {
        let n = self.regions.len();
        if self.latency_ms.len() != n || self.latency_ms.iter().any(|row| row.len() != n) {
            return Err(NetworkModelError::BadShape);
        }
        for i in 0..n {
            for j in 0..n {
                if self.latency_ms[i][j] <= 0.0 {
                    return Err(NetworkModelError::NonPositiveLatency);
                }
                if self.latency_ms[i][j] != self.latency_ms[j][i] {
                    return Err(NetworkModelError::Asymmetric);
                }
            }
        }
        if self.bandwidth_bps == 0 {
            return Err(NetworkModelError::NoBandwidth);
        }
        Ok(())
    }

    pub fn region_index(&self, region: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == region)
    }

    pub fn latency_ns(&self, from: usize, to: usize) -> u64 {
        (self.latency_ms[from][to] * 1_000_000.0) as u64
    }
}

/// The default six-region model with plausible one-way inter-region
/// latencies (documented constants, not measurements) and 4 Gbit/s egress.
pub fn default_region_matrix() -> NetworkModel {
    // Order follows REGIONS: asia-east2, europe-west3, us-west1,
    // south-america-east1, me-west1, australia-southeast1.
    let latency_ms = vec![
        vec![1.0, 90.0, 70.0, 150.0, 110.0, 60.0],
        vec![90.0, 1.0, 70.0, 100.0, 30.0, 140.0],
        vec![70.0, 70.0, 1.0, 90.0, 120.0, 70.0],
        vec![150.0, 100.0, 90.0, 1.0, 160.0, 150.0],
        vec![110.0, 30.0, 120.0, 160.0, 1.0, 145.0],
        vec![60.0, 140.0, 70.0, 150.0, 145.0, 1.0],
    ];
    NetworkModel {
        regions: REGIONS.iter().map(|r| r.to_string()).collect(),
        latency_ms,
        jitter_ms: 2.0,
        bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matrix_is_valid_and_symmetric() {
        let model = default_region_matrix();
        model.validate().unwrap();
        assert_eq!(model.regions.len(), 6);
        for i in 0..6 {
            for j in 0..6 {
                assert!(model.latency_ms[i][j] > 0.0);
                assert_eq!(model.latency_ms[i][j], model.latency_ms[j][i]);
            }
        }
    }

    #[test]
    fn intra_region_is_fastest() {
        let model = default_region_matrix();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(model.latency_ms[i][i] < model.latency_ms[i][j]);
                }
            }
        }
    }

    #[test]
    fn validation_catches_asymmetry() {
        let mut model = default_region_matrix();
        model.latency_ms[0][1] = 500.0;
        assert_eq!(model.validate(), Err(NetworkModelError::Asymmetric));
    }
}
