//! Passphrase-derived network key and handshake MACs.
//!
//! Joining the network requires knowledge of a shared passphrase. The key is
//! derived by iterating SHA-256 (the same hash used for cids) 10 000 times
//! over `passphrase || salt`; handshake responses prove knowledge of that
//! key with an HMAC-SHA256 over `challenge_nonce || responder_peer_id`.

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::PeerId;

const KDF_ITERATIONS: u32 = 10_000;
const KDF_SALT: &[u8] = b"peerperfnet-v1";
const SHA256_BLOCK_LEN: usize = 64;

/// Network key derived from the shared passphrase.
#[derive(Clone, PartialEq, Eq)]
pub struct AuthKey([u8; 32]);

impl std::fmt::Debug for AuthKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Never print key material.
        f.write_str("AuthKey(..)")
    }
}

/// Handshake challenge nonce: 16 fresh random bytes per connection attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nonce(pub [u8; 16]);

impl Nonce {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Nonce(bytes)
    }
}

/// Keyed-hash output proving passphrase knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mac(pub [u8; 32]);

/// Derive the network key: 10 000 SHA-256 iterations over
/// `passphrase || "peerperfnet-v1"`.
pub fn derive_network_key(passphrase: &str) -> AuthKey {
    let mut state: Vec<u8> = Vec::with_capacity(passphrase.len() + KDF_SALT.len());
    state.extend_from_slice(passphrase.as_bytes());
    state.extend_from_slice(KDF_SALT);
    let mut digest: [u8; 32] = Sha256::digest(&state).into();
    for _ in 1..KDF_ITERATIONS {
        digest = Sha256::digest(digest).into();
    }
    AuthKey(digest)
}

/// The MAC a peer sends to answer a challenge: keyed hash over
/// `nonce || responder peer id`.
pub fn response_mac(key: &AuthKey, challenge: &Nonce, responder: &PeerId) -> Mac {
    let mut message = Vec::with_capacity(16 + 16);
    message.extend_from_slice(&challenge.0);
    message.extend_from_slice(responder.as_bytes());
    Mac(hmac_sha256(&key.0, &message))
}

/// Constant-time MAC comparison.
pub fn verify_mac(expected: &Mac, got: &Mac) -> bool {
    let mut diff = 0u8;
    for (a, b) in expected.0.iter().zip(got.0.iter()) {
        diff |= a ^ b;
    }
    diff == 0
}

/// HMAC-SHA256 (RFC 2104): H((k ^ opad) || H((k ^ ipad) || m)).
fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut block_key = [0u8; SHA256_BLOCK_LEN];
    if key.len() > SHA256_BLOCK_LEN {
        let hashed: [u8; 32] = Sha256::digest(key).into();
        block_key[..32].copy_from_slice(&hashed);
    } else {
        block_key[..key.len()].copy_from_slice(key);
    }

    let mut inner = Sha256::new();
    inner.update(block_key.map(|b| b ^ 0x36));
    inner.update(message);
    let inner_digest: [u8; 32] = inner.finalize().into();

    let mut outer = Sha256::new();
    outer.update(block_key.map(|b| b ^ 0x5c));
    outer.update(inner_digest);
    outer.finalize().into()
}

impl Serialize for Nonce {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Nonce {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let bytes: [u8; 16] =
            raw.try_into().map_err(|_| serde::de::Error::custom("nonce must be 16 bytes"))?;
        Ok(Nonce(bytes))
    }
}

impl Serialize for Mac {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Mac {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let bytes: [u8; 32] =
            raw.try_into().map_err(|_| serde::de::Error::custom("mac must be 32 bytes"))?;
        Ok(Mac(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // RFC 4231 test vectors, verified against an independent implementation.
    #[test]
    fn hmac_matches_rfc4231_case_1() {
        let key = [0x0bu8; 20];
        let mac = hmac_sha256(&key, b"Hi There");
        assert_eq!(
            hex::encode(mac),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        );
    }

    #[test]
    fn hmac_matches_rfc4231_case_2() {
        let mac = hmac_sha256(b"Jefe", b"what do ya want for nothing?");
        assert_eq!(
            hex::encode(mac),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    #[test]
    fn same_passphrase_same_key() {
        assert_eq!(derive_network_key("swordfish"), derive_network_key("swordfish"));
        assert_ne!(derive_network_key("swordfish"), derive_network_key("Swordfish"));
    }

    #[test]
    fn mac_binds_nonce_and_responder() {
        let key = derive_network_key("pw");
        let nonce_a = Nonce([1; 16]);
        let nonce_b = Nonce([2; 16]);
        let peer_x = PeerId::from_bytes([3; 16]);
        let peer_y = PeerId::from_bytes([4; 16]);

        let base = response_mac(&key, &nonce_a, &peer_x);
        assert!(verify_mac(&base, &response_mac(&key, &nonce_a, &peer_x)));
        assert!(!verify_mac(&base, &response_mac(&key, &nonce_b, &peer_x)));
        assert!(!verify_mac(&base, &response_mac(&key, &nonce_a, &peer_y)));
        assert!(!verify_mac(&base, &response_mac(&derive_network_key("other"), &nonce_a, &peer_x)));
    }
}
