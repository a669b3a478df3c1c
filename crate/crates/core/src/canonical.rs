//! Canonical textual encoding.
//!
//! Everything that gets hashed or sent on the wire is encoded as canonical
//! JSON: object keys sorted ascending, minimal whitespace, UTF-8. Integers
//! render as plain decimals and floats as shortest round-trip decimals, so
//! the same value always produces the same bytes regardless of which peer
//! encoded it.
//!
//! The sort is applied explicitly while writing, so the encoding does not
//! depend on `serde_json`'s map ordering.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("value not representable in canonical form: {0}")]
    Unrepresentable(#[from] serde_json::Error),
}

/// Encode any serializable value as canonical JSON.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, CanonicalError> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&tree, &mut out);
    Ok(out)
}

/// Canonical JSON as raw bytes, ready for hashing or framing.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    Ok(to_canonical_json(value)?.into_bytes())
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(true) => out.push_str("true"),
        Value::Bool(false) => out.push_str("false"),
        // serde_json renders integers exactly and floats via shortest
        // round-trip (ryu), which is the canonical form we want.
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(key, out);
                out.push(':');
                write_value(&map[*key], out);
            }
            out.push('}');
        }
    }
}

fn write_string(s: &str, out: &mut String) {
    // serde_json's escaping rules are deterministic; reuse them.
    out.push_str(&serde_json::to_string(s).expect("string serialization is infallible"));
}
