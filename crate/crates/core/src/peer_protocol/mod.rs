//! Wire protocol: peer identities, message types, framing and the
//! passphrase-gated handshake primitives.
//!
//! Everything here is pure data and pure functions; the stateful protocol
//! behavior (sessions, gossip, anti-entropy, block exchange) lives in
//! [`crate::engine`], which is driven by the real daemon and the simulator
//! alike.

mod auth;
mod message;

pub use auth::{derive_network_key, response_mac, verify_mac, AuthKey, Mac, Nonce};
pub use message::{
    decode_frame, encode_frame, wire_size, BlockBytes, FrameError, Message, PeerContact,
    MAX_FRAME_SIZE, PROTOCOL_VERSION,
};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cid::Cid;

/// Node identity: 16 random bytes, rendered as 32 lowercase hex chars.
/// Unique per node instance.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId([u8; 16]);

impl PeerId {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        PeerId(bytes)
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        PeerId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeerId({})", self)
    }
}

impl FromStr for PeerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(format!("peer id must be 32 lowercase hex chars, got {s:?}"));
        }
        let raw = hex::decode(s).map_err(|e| e.to_string())?;
        let mut bytes = [0u8; 16];
        bytes.copy_from_slice(&raw);
        Ok(PeerId(bytes))
    }
}

impl Serialize for PeerId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PeerId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Cids designated private: inbound `WANT`s for these are answered exactly
/// like requests for blocks we do not have, so existence is never leaked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DenyList {
    cids: BTreeSet<Cid>,
}

impl DenyList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cid: Cid) {
        self.cids.insert(cid);
    }

    pub fn contains(&self, cid: &Cid) -> bool {
        self.cids.contains(cid)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cid> {
        self.cids.iter()
    }

    pub fn len(&self) -> usize {
        self.cids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cids.is_empty()
    }
}

impl FromIterator<Cid> for DenyList {
    fn from_iter<T: IntoIterator<Item = Cid>>(iter: T) -> Self {
        DenyList { cids: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn peer_id_text_round_trips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let id = PeerId::generate(&mut rng);
        let text = id.to_string();
        assert_eq!(text.len(), 32);
        assert_eq!(text.parse::<PeerId>().unwrap(), id);
    }

    #[test]
    fn peer_id_rejects_bad_text() {
        assert!("short".parse::<PeerId>().is_err());
        assert!("ZZ00112233445566778899aabbccddee".parse::<PeerId>().is_err());
    }

    #[test]
    fn deny_list_membership() {
        let mut deny = DenyList::new();
        let cid = Cid::for_bytes(b"private");
        assert!(!deny.contains(&cid));
        deny.insert(cid);
        assert!(deny.contains(&cid));
    }
}
