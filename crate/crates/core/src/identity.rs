//! Content-addressed identity for virtual data objects.
//!
//! Object identity is the SHA-256 of a canonical JSON encoding of the
//! information that can change the bytes a derivation produces: the
//! transformation, the reproducibility-domain parameters, and the input
//! objects. Application and site parameters never enter the hash, which is
//! what makes a derivation's identity independent of where it runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::VdcError;
use crate::types::{ParamValue, Transformation};

/// Identity of a virtual data object: a SHA-256 digest rendered as
/// `vd1:<64 lowercase hex>`. The rendering is a wire- and journal-level
/// contract and must stay bit-exact.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(pub [u8; 32]);

impl ObjectId {
    pub fn from_digest(digest: [u8; 32]) -> Self {
        ObjectId(digest)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vd1:{}", hex::encode(self.0))
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for ObjectId {
    type Err = VdcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex_part = s
            .strip_prefix("vd1:")
            .ok_or_else(|| VdcError::BadObjectId(s.to_string()))?;
        if hex_part.len() != 64 || hex_part.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(VdcError::BadObjectId(s.to_string()));
        }
        let bytes = hex::decode(hex_part).map_err(|_| VdcError::BadObjectId(s.to_string()))?;
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&bytes);
        Ok(ObjectId(digest))
    }
}

impl Serialize for ObjectId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ObjectId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Value tree that canonical encoding accepts. Deliberately has no
/// floating-point variant: anything that must hash identically everywhere
/// is carried as an integer or a decimal string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CanonValue {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    List(Vec<CanonValue>),
    Map(BTreeMap<String, CanonValue>),
}

impl CanonValue {
    /// Convert from arbitrary JSON, rejecting floats and integers outside
    /// the signed 64-bit range.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, VdcError> {
        use serde_json::Value;
        match value {
            Value::Null => Ok(CanonValue::Null),
            Value::Bool(b) => Ok(CanonValue::Bool(*b)),
            Value::Number(n) => n
                .as_i64()
                .map(CanonValue::Int)
                .ok_or_else(|| VdcError::UnencodableValue(n.to_string())),
            Value::String(s) => Ok(CanonValue::Str(s.clone())),
            Value::Array(items) => items
                .iter()
                .map(CanonValue::from_json)
                .collect::<Result<Vec<_>, _>>()
                .map(CanonValue::List),
            Value::Object(entries) => {
                let mut map = BTreeMap::new();
                for (k, v) in entries {
                    map.insert(k.clone(), CanonValue::from_json(v)?);
                }
                Ok(CanonValue::Map(map))
            }
        }
    }
}

impl From<&ParamValue> for CanonValue {
    fn from(v: &ParamValue) -> Self {
        match v {
            ParamValue::Int(i) => CanonValue::Int(*i),
            ParamValue::Bool(b) => CanonValue::Bool(*b),
            ParamValue::Str(s) => CanonValue::Str(s.clone()),
            ParamValue::Decimal(s) => CanonValue::Str(s.clone()),
        }
    }
}

/// Deterministic byte encoding: JSON with map keys in code-point order, no
/// insignificant whitespace, mandatory escapes only, UTF-8 throughout.
/// Equal values encode to equal bytes on every platform.
pub fn canonical_encode(value: &CanonValue) -> Vec<u8> {
    let mut out = Vec::new();
    write_value(&mut out, value);
    out
}

fn write_value(out: &mut Vec<u8>, value: &CanonValue) {
    match value {
        CanonValue::Null => out.extend_from_slice(b"null"),
        CanonValue::Bool(true) => out.extend_from_slice(b"true"),
        CanonValue::Bool(false) => out.extend_from_slice(b"false"),
        CanonValue::Int(i) => out.extend_from_slice(i.to_string().as_bytes()),
        CanonValue::Str(s) => write_string(out, s),
        CanonValue::List(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(out, item);
            }
            out.push(b']');
        }
        CanonValue::Map(entries) => {
            out.push(b'{');
            for (i, (k, v)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(out, k);
                out.push(b':');
                write_value(out, v);
            }
            out.push(b'}');
        }
    }
}

fn write_string(out: &mut Vec<u8>, s: &str) {
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{09}' => out.extend_from_slice(b"\\t"),
            '\u{0a}' => out.extend_from_slice(b"\\n"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            '\u{0d}' => out.extend_from_slice(b"\\r"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().into()
}

/// Identity of the object a derivation produces. Only the transformation
/// (name, version, body hash), the REPRO-domain parameters, and the input
/// object ids participate; APP and SITE bindings cannot reach this function.
pub fn derivation_output_id(
    tx: &Transformation,
    repro_params: &BTreeMap<String, ParamValue>,
    input_ids: &[ObjectId],
) -> Result<ObjectId, VdcError> {
    for name in repro_params.keys() {
        if !crate::types::is_builtin_repro(name) {
            let entry = tx
                .schema
                .entry(name)
                .ok_or_else(|| VdcError::NonReproParam(name.clone()))?;
            if entry.domain != crate::types::ParamDomain::Repro {
                return Err(VdcError::NonReproParam(name.clone()));
            }
        }
    }
    let mut tx_map = BTreeMap::new();
    tx_map.insert("name".to_string(), CanonValue::Str(tx.name.clone()));
    tx_map.insert("version".to_string(), CanonValue::Int(tx.version as i64));
    tx_map.insert(
        "body_hash".to_string(),
        CanonValue::Str(tx.body_hash.clone()),
    );
    let repro = repro_params
        .iter()
        .map(|(k, v)| (k.clone(), CanonValue::from(v)))
        .collect();
    let inputs = input_ids
        .iter()
        .map(|id| CanonValue::Str(id.to_string()))
        .collect();
    let mut root = BTreeMap::new();
    root.insert("transformation".to_string(), CanonValue::Map(tx_map));
    root.insert("repro".to_string(), CanonValue::Map(repro));
    root.insert("inputs".to_string(), CanonValue::List(inputs));
    let bytes = canonical_encode(&CanonValue::Map(root));
    Ok(ObjectId(sha256(&bytes)))
}

/// Canonical bytes a derivation's output id is the hash of. The simulated
/// executor seeds its generator from these.
pub fn derivation_identity_bytes(
    tx_name: &str,
    tx_version: u32,
    body_hash: &str,
    repro_params: &BTreeMap<String, ParamValue>,
    input_ids: &[ObjectId],
) -> Vec<u8> {
    let mut tx_map = BTreeMap::new();
    tx_map.insert("name".to_string(), CanonValue::Str(tx_name.to_string()));
    tx_map.insert("version".to_string(), CanonValue::Int(tx_version as i64));
    tx_map.insert("body_hash".to_string(), CanonValue::Str(body_hash.to_string()));
    let repro = repro_params
        .iter()
        .map(|(k, v)| (k.clone(), CanonValue::from(v)))
        .collect();
    let inputs = input_ids
        .iter()
        .map(|id| CanonValue::Str(id.to_string()))
        .collect();
    let mut root = BTreeMap::new();
    root.insert("transformation".to_string(), CanonValue::Map(tx_map));
    root.insert("repro".to_string(), CanonValue::Map(repro));
    root.insert("inputs".to_string(), CanonValue::List(inputs));
    canonical_encode(&CanonValue::Map(root))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(entries: &[(&str, CanonValue)]) -> CanonValue {
        CanonValue::Map(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        )
    }

    #[test]
    fn keys_sorted() {
        let v = map(&[("b", CanonValue::Int(1)), ("a", CanonValue::Int(2))]);
        assert_eq!(canonical_encode(&v), b"{\"a\":2,\"b\":1}");
    }

    #[test]
    fn float_rejected() {
        let json: serde_json::Value = serde_json::json!({"x": 3.14});
        assert!(matches!(
            CanonValue::from_json(&json),
            Err(VdcError::UnencodableValue(_))
        ));
    }

    #[test]
    fn utf8_passes_through() {
        // "é" must appear as the raw UTF-8 bytes C3 A9, not an escape.
        let v = map(&[("s", CanonValue::Str("é".to_string()))]);
        assert_eq!(
            canonical_encode(&v),
            vec![0x7b, 0x22, 0x73, 0x22, 0x3a, 0x22, 0xc3, 0xa9, 0x22, 0x7d]
        );
    }

    #[test]
    fn control_chars_escaped() {
        let v = CanonValue::Str("a\nb\u{01}".to_string());
        assert_eq!(canonical_encode(&v), b"\"a\\nb\\u0001\"");
    }

    #[test]
    fn object_id_round_trip() {
        let id = ObjectId(sha256(b"hello"));
        let rendered = id.to_string();
        assert!(rendered.starts_with("vd1:"));
        assert_eq!(rendered.len(), 4 + 64);
        let parsed: ObjectId = rendered.parse().unwrap();
        assert_eq!(parsed, id);
        assert!("vd1:XYZ".parse::<ObjectId>().is_err());
        assert!("vd2:00".parse::<ObjectId>().is_err());
    }

    #[test]
    fn output_id_golden_vector() {
        // Frozen from an independent SHA-256 run over the canonical bytes:
        // {"inputs":[],"repro":{"events":10,"random_seed":100},
        //  "transformation":{"body_hash":"00…00","name":"evgen","version":1}}
        let tx = crate::types::test_support::minimal_tx("evgen", 1, "0".repeat(64).as_str());
        let mut repro = BTreeMap::new();
        repro.insert("events".to_string(), ParamValue::Int(10));
        repro.insert("random_seed".to_string(), ParamValue::Int(100));
        let id = derivation_output_id(&tx, &repro, &[]).unwrap();
        assert_eq!(
            id.to_string(),
            "vd1:877e3161cf5f06c6e8e15b6918ba07613792711a25da79dc53df2111d0cb899f"
        );
    }

    #[test]
    fn non_repro_param_rejected() {
        let tx = crate::types::test_support::minimal_tx("evgen", 1, &"0".repeat(64));
        let mut params = BTreeMap::new();
        params.insert("verbosity".to_string(), ParamValue::Int(1));
        assert!(matches!(
            derivation_output_id(&tx, &params, &[]),
            Err(VdcError::NonReproParam(_))
        ));
    }
}
