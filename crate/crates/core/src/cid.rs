//! Content identifiers.
//!
//! A [`Cid`] is the SHA-256 digest of a payload's bytes, rendered as
//! `c1:<64 lowercase hex chars>`. It is the universal reference for blocks,
//! log entries and validator code throughout the system.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Text-form prefix; `c1` pins the digest algorithm to SHA-256.
pub const CID_PREFIX: &str = "c1:";

/// Length of the text form: prefix plus 64 hex chars.
pub const CID_TEXT_LEN: usize = CID_PREFIX.len() + 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CidParseError {
    #[error("cid must match ^c1:[0-9a-f]{{64}}$, got {0:?}")]
    Malformed(String),
}

/// Content identifier: SHA-256 digest of the referenced bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cid([u8; 32]);

impl Cid {
    /// Hash `bytes` and return their identifier.
    pub fn for_bytes(bytes: &[u8]) -> Self {
        let digest = Sha256::digest(bytes);
        Cid(digest.into())
    }

    pub fn from_digest(digest: [u8; 32]) -> Self {
        Cid(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    /// True iff `bytes` hash to this identifier.
    pub fn matches(&self, bytes: &[u8]) -> bool {
        Cid::for_bytes(bytes) == *self
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", CID_PREFIX, hex::encode(self.0))
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", self)
    }
}

impl FromStr for Cid {
    type Err = CidParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || CidParseError::Malformed(s.to_string());
        if s.len() != CID_TEXT_LEN || !s.starts_with(CID_PREFIX) {
            return Err(malformed());
        }
        let hex_part = &s[CID_PREFIX.len()..];
        // hex::decode accepts uppercase; the text form is lowercase only.
        if !hex_part.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(malformed());
        }
        let raw = hex::decode(hex_part).map_err(|_| malformed())?;
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&raw);
        Ok(Cid(digest))
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference digests computed with an independent SHA-256 implementation
    // (python hashlib) before this module was written.
    const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    const ABC_SHA256: &str = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";

    #[test]
    fn empty_bytes_digest_matches_reference() {
        let cid = Cid::for_bytes(b"");
        assert_eq!(cid.to_string(), format!("c1:{}", EMPTY_SHA256));
    }

    #[test]
    fn abc_digest_matches_reference() {
        let cid = Cid::for_bytes(b"abc");
        assert_eq!(cid.to_string(), format!("c1:{}", ABC_SHA256));
    }

    #[test]
    fn text_form_round_trips() {
        let cid = Cid::for_bytes(b"round trip");
        let parsed: Cid = cid.to_string().parse().unwrap();
        assert_eq!(parsed, cid);
    }

    #[test]
    fn rejects_malformed_strings() {
        for bad in [
            "",
            "c1:",
            "c1:abc",
            &format!("c2:{}", EMPTY_SHA256),
            &format!("c1:{}", EMPTY_SHA256.to_uppercase()),
            &format!("c1:{}0", EMPTY_SHA256),
            &EMPTY_SHA256.to_string(),
            "c1:zzb0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ] {
            assert!(bad.parse::<Cid>().is_err(), "should reject {bad:?}");
        }
    }

    #[test]
    fn equality_follows_digest() {
        let a = Cid::for_bytes(b"x");
        let b = Cid::for_bytes(b"x");
        let c = Cid::for_bytes(b"y");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn parse_display_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let cid = Cid::for_bytes(&bytes);
            let text = cid.to_string();
            prop_assert_eq!(text.len(), CID_TEXT_LEN);
            prop_assert_eq!(text.parse::<Cid>().unwrap(), cid);
            prop_assert!(cid.matches(&bytes));
        }
    }
}
