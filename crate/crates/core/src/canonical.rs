//! Canonical wire form shared by envelopes, documents, ledger exports and
//! transcripts: JSON with lexicographically sorted keys and no whitespace.
//!
//! Binary fields are lowercase hex unless a type says otherwise. Decoding is
//! strict: uppercase hex is rejected so that every value has exactly one
//! textual encoding, which is what makes byte-level tamper evidence work.

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Serializes `value` in canonical form.
///
/// Going through `serde_json::Value` sorts object keys (the default map is a
/// `BTreeMap`).
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let tree = serde_json::to_value(value).expect("canonical types serialize to JSON");
    serde_json::to_vec(&tree).expect("JSON values always serialize")
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("serde_json emits UTF-8")
}

/// Parses `bytes` and rejects any input that is not already in canonical
/// form (key order, whitespace, escapes).
pub fn from_canonical_bytes<T: Serialize + DeserializeOwned>(
    bytes: &[u8],
) -> Result<T, CanonicalError> {
    let value: T = serde_json::from_slice(bytes).map_err(CanonicalError::Parse)?;
    if to_canonical_bytes(&value) != bytes {
        return Err(CanonicalError::NotCanonical);
    }
    Ok(value)
}

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("parse error: {0}")]
    Parse(serde_json::Error),
    #[error("input is not in canonical form")]
    NotCanonical,
}

/// Lowercase-only hex decoding.
pub fn decode_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err("uppercase hex is not canonical".into());
    }
    hex::decode(s).map_err(|e| e.to_string())
}

pub fn decode_hex_array<const N: usize>(s: &str) -> Result<[u8; N], String> {
    let bytes = decode_hex(s)?;
    bytes
        .try_into()
        .map_err(|v: Vec<u8>| format!("expected {N} bytes, got {}", v.len()))
}

/// `#[serde(with = "hex_bytes")]` for `Vec<u8>` fields.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        super::decode_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "base64_bytes")]` for ciphertext-like fields.
pub mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

/// Implements hex `Serialize`/`Deserialize` for a `[u8; N]` newtype.
macro_rules! hex_newtype_serde {
    ($ty:ident, $len:expr) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.0))
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = <String as serde::Deserialize>::deserialize(d)?;
                $crate::canonical::decode_hex_array::<$len>(&s)
                    .map($ty)
                    .map_err(serde::de::Error::custom)
            }
        }
    };
}
pub(crate) use hex_newtype_serde;
