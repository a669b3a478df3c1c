//! Node configuration: TOML file, environment overrides, validation.
//!
//! Keys mirror the [`NodeConfig`] fields one to one. Every key can be
//! overridden with `PEERPERFNET_<UPPER_FIELD>` in the environment (lists are
//! comma-separated).

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::PinPolicy;
use crate::validation::{RangeRules, Threshold, ValidatorKind, ValidatorSpec, VotePolicy};

pub const DEFAULT_P2P_PORT: u16 = 7201;
pub const DEFAULT_API_PORT: u16 = 7200;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeConfig {
    pub data_root: PathBuf,
    pub listen_address: String,
    /// Loopback by default; the P2P port is the only intended remote surface.
    pub api_listen_address: String,
    pub bootstrap_peers: Vec<String>,
    pub passphrase: String,
    pub region_label: String,
    pub is_root: bool,
    pub pin_policy: PinPolicy,
    pub share_by_default: bool,
    pub gossip_interval_ms: u64,
    pub fan_out: usize,
    pub response_timeout_ms: u64,
    pub vote_k_required: u32,
    pub vote_response_timeout_ms: u64,
    pub vote_accept_threshold_num: u32,
    pub vote_accept_threshold_den: u32,
    pub validator_id: String,
    pub validator_version: String,
    pub validator_kind: ValidatorKind,
    pub max_runtime_ms: u64,
    pub max_node_count: u32,
    pub max_input_size_bytes: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        let rules = RangeRules::default();
        let votes = VotePolicy::default();
        let validator = ValidatorSpec::default();
        NodeConfig {
            data_root: PathBuf::from("./peerperfnet-data"),
            listen_address: format!("127.0.0.1:{DEFAULT_P2P_PORT}"),
            api_listen_address: format!("127.0.0.1:{DEFAULT_API_PORT}"),
            bootstrap_peers: Vec::new(),
            passphrase: String::new(),
            region_label: "local".to_string(),
            is_root: false,
            pin_policy: PinPolicy::PinAllContributions,
            share_by_default: true,
            gossip_interval_ms: 1000,
            fan_out: 4,
            response_timeout_ms: 2000,
            vote_k_required: votes.k_required,
            vote_response_timeout_ms: votes.response_timeout_ms,
            vote_accept_threshold_num: votes.accept_threshold.num,
            vote_accept_threshold_den: votes.accept_threshold.den,
            validator_id: validator.validator_id,
            validator_version: validator.version,
            validator_kind: validator.kind,
            max_runtime_ms: rules.max_runtime_ms,
            max_node_count: rules.max_node_count,
            max_input_size_bytes: rules.max_input_size_bytes,
        }
    }
}

impl NodeConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let body = std::fs::read_to_string(path)?;
        let mut config: NodeConfig =
            toml::from_str(&body).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.apply_env_overrides(std::env::vars().collect());
        config.validate()?;
        Ok(config)
    }

    /// Apply `PEERPERFNET_<UPPER_FIELD>` overrides.
    pub fn apply_env_overrides(&mut self, vars: BTreeMap<String, String>) {
        fn set<T: std::str::FromStr>(target: &mut T, vars: &BTreeMap<String, String>, key: &str) {
            if let Some(raw) = vars.get(key) {
                match raw.parse::<T>() {
                    Ok(v) => *target = v,
                    Err(_) => log::warn!("ignoring unparsable env override {key}={raw}"),
                }
            }
        }
        set(&mut self.listen_address, &vars, "PEERPERFNET_LISTEN_ADDRESS");
        set(&mut self.api_listen_address, &vars, "PEERPERFNET_API_LISTEN_ADDRESS");
        set(&mut self.passphrase, &vars, "PEERPERFNET_PASSPHRASE");
        set(&mut self.region_label, &vars, "PEERPERFNET_REGION_LABEL");
        set(&mut self.is_root, &vars, "PEERPERFNET_IS_ROOT");
        set(&mut self.share_by_default, &vars, "PEERPERFNET_SHARE_BY_DEFAULT");
        set(&mut self.gossip_interval_ms, &vars, "PEERPERFNET_GOSSIP_INTERVAL_MS");
        set(&mut self.fan_out, &vars, "PEERPERFNET_FAN_OUT");
        set(&mut self.response_timeout_ms, &vars, "PEERPERFNET_RESPONSE_TIMEOUT_MS");
        set(&mut self.vote_k_required, &vars, "PEERPERFNET_VOTE_K_REQUIRED");
        if let Some(raw) = vars.get("PEERPERFNET_DATA_ROOT") {
            self.data_root = PathBuf::from(raw);
        }
        if let Some(raw) = vars.get("PEERPERFNET_BOOTSTRAP_PEERS") {
            self.bootstrap_peers =
                raw.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(raw) = vars.get("PEERPERFNET_PIN_POLICY") {
            match raw.as_str() {
                "pin_all_contributions" => self.pin_policy = PinPolicy::PinAllContributions,
                "pin_on_use" => self.pin_policy = PinPolicy::PinOnUse,
                "pin_none" => self.pin_policy = PinPolicy::PinNone,
                other => log::warn!("ignoring unknown pin policy {other:?}"),
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.is_root && self.bootstrap_peers.is_empty() {
            return Err(ConfigError::Invalid(
                "non-root nodes need at least one bootstrap peer".to_string(),
            ));
        }
        for (name, value) in [
            ("gossip_interval_ms", self.gossip_interval_ms),
            ("response_timeout_ms", self.response_timeout_ms),
            ("vote_response_timeout_ms", self.vote_response_timeout_ms),
        ] {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        self.vote_policy().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn vote_policy(&self) -> VotePolicy {
        VotePolicy {
            k_required: self.vote_k_required,
            response_timeout_ms: self.vote_response_timeout_ms,
            accept_threshold: Threshold {
                num: self.vote_accept_threshold_num,
                den: self.vote_accept_threshold_den,
            },
        }
    }

    pub fn range_rules(&self) -> RangeRules {
        RangeRules {
            max_runtime_ms: self.max_runtime_ms,
            max_node_count: self.max_node_count,
            max_input_size_bytes: self.max_input_size_bytes,
        }
    }

    pub fn validator_spec(&self) -> ValidatorSpec {
        ValidatorSpec {
            validator_id: self.validator_id.clone(),
            version: self.validator_version.clone(),
            kind: self.validator_kind,
            code_cid: None,
            params: BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_for_root() {
        let mut config = NodeConfig::default();
        config.is_root = true;
        assert!(config.validate().is_ok());
    }

    #[test]
    fn non_root_without_bootstrap_is_invalid() {
        let config = NodeConfig::default();
        assert!(config.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut config = NodeConfig::default();
        config.is_root = true;
        config.region_label = "asia-east2".to_string();
        let body = toml::to_string(&config).unwrap();
        let parsed: NodeConfig = toml::from_str(&body).unwrap();
        assert_eq!(parsed.region_label, "asia-east2");
        assert!(parsed.is_root);
    }

    #[test]
    fn env_overrides_apply() {
        let mut config = NodeConfig::default();
        let vars: BTreeMap<String, String> = [
            ("PEERPERFNET_REGION_LABEL".to_string(), "me-west1".to_string()),
            ("PEERPERFNET_FAN_OUT".to_string(), "7".to_string()),
            ("PEERPERFNET_BOOTSTRAP_PEERS".to_string(), "a:1, b:2".to_string()),
            ("PEERPERFNET_IS_ROOT".to_string(), "true".to_string()),
        ]
        .into();
        config.apply_env_overrides(vars);
        assert_eq!(config.region_label, "me-west1");
        assert_eq!(config.fan_out, 7);
        assert_eq!(config.bootstrap_peers, vec!["a:1", "b:2"]);
        assert!(config.is_root);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let parsed: NodeConfig = toml::from_str("region_label = \"us-west1\"\nis_root = true\n").unwrap();
        assert_eq!(parsed.region_label, "us-west1");
        assert_eq!(parsed.fan_out, NodeConfig::default().fan_out);
    }
}
