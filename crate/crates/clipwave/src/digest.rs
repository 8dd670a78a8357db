//! Canonical JSON and config digests.
//!
//! Objects are written with sorted keys, no whitespace, and every
//! floating-point number with 17 significant digits, so the digest does not
//! depend on field order or on how a number was spelled in the input file.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, &mut out);
    out
}

fn write_value(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let x = n.as_f64().expect("json numbers are finite");
                out.push_str(&format!("{x:.16e}"));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
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
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("strings serialize"));
                out.push(':');
                write_value(&map[key], out);
            }
            out.push('}');
        }
    }
}

/// Hex SHA-256 of the canonical JSON of `value`.
pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let canonical = canonical_json(&serde_json::to_value(value)?);
    let hash = Sha256::digest(canonical.as_bytes());
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_keys_and_fixes_float_width() {
        let v: Value = serde_json::from_str(r#"{"b": 0.5, "a": [1, 2.0, "x"], "c": null}"#).unwrap();
        assert_eq!(
            canonical_json(&v),
            r#"{"a":[1,2.0000000000000000e0,"x"],"b":5.0000000000000000e-1,"c":null}"#
        );
    }

    #[test]
    fn digest_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"x": 1.25, "y": {"p": 1, "q": 2}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"y": {"q": 2, "p": 1}, "x": 1.250}"#).unwrap();
        assert_eq!(digest(&a).unwrap(), digest(&b).unwrap());
        let c: Value = serde_json::from_str(r#"{"x": 1.2500001, "y": {"q": 2, "p": 1}}"#).unwrap();
        assert_ne!(digest(&a).unwrap(), digest(&c).unwrap());
    }

    #[test]
    fn seventeen_digits_separate_neighbours() {
        let x = 0.1f64;
        let y = f64::from_bits(x.to_bits() + 1);
        assert_ne!(digest(&x).unwrap(), digest(&y).unwrap());
    }
}
