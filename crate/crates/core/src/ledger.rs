//! Append-only, hash-chained DID registry.
//!
//! Each record binds a DID to the digest of its document and to the owner's
//! public key, plus an opaque locator for the identity hub holding the
//! document. `block_digest` covers every other field, and each record links
//! to its predecessor's `block_digest` (32 zero bytes for the first record).
//! No template or share material is ever written here.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use data_encoding::BASE32_NOPAD;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical;
use crate::crypto::{digest, Hash256, PublicKey};

pub const DID_METHOD: &str = "horcrux";
const DID_ID_LEN: usize = 26;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("document digest {0} already registered")]
    AlreadyRegistered(Hash256),
    #[error("DID {0} not found")]
    NotFound(Did),
    #[error("malformed DID: {0}")]
    InvalidDid(String),
    #[error("malformed ledger export: {0}")]
    Malformed(String),
}

/// `did:horcrux:<id>` where `id` is the lowercase unpadded base32 form of the
/// first 16 bytes of the genesis document digest.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Did {
    id: String,
}

impl Did {
    pub fn from_document_digest(doc_digest: &Hash256) -> Self {
        Did { id: BASE32_NOPAD.encode(&doc_digest.0[..16]).to_ascii_lowercase() }
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "did:{DID_METHOD}:{}", self.id)
    }
}

impl fmt::Debug for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Did({self})")
    }
}

impl FromStr for Did {
    type Err = LedgerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LedgerError::InvalidDid(s.to_string());
        let id = s
            .strip_prefix("did:")
            .and_then(|rest| rest.strip_prefix(DID_METHOD))
            .and_then(|rest| rest.strip_prefix(':'))
            .ok_or_else(bad)?;
        if id.len() != DID_ID_LEN || !id.bytes().all(|b| b.is_ascii_lowercase() || (b'2'..=b'7').contains(&b)) {
            return Err(bad());
        }
        let decoded = BASE32_NOPAD.decode(id.to_ascii_uppercase().as_bytes()).map_err(|_| bad())?;
        // Reject ids whose unused trailing bits are nonzero.
        if decoded.len() != 16 || BASE32_NOPAD.encode(&decoded).to_ascii_lowercase() != id {
            return Err(bad());
        }
        Ok(Did { id: id.to_string() })
    }
}

impl Serialize for Did {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Did {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerRecord {
    pub did: Did,
    pub doc_digest: Hash256,
    pub owner_public: PublicKey,
    pub storage_ref: String,
    pub prev_block_digest: Hash256,
    pub block_digest: Hash256,
}

#[derive(Serialize)]
struct RecordBody<'a> {
    did: &'a Did,
    doc_digest: &'a Hash256,
    owner_public: &'a PublicKey,
    storage_ref: &'a str,
    prev_block_digest: &'a Hash256,
}

impl LedgerRecord {
    /// Digest of the canonical serialization of every field but
    /// `block_digest`.
    pub fn compute_block_digest(&self) -> Hash256 {
        digest(&canonical::to_canonical_bytes(&RecordBody {
            did: &self.did,
            doc_digest: &self.doc_digest,
            owner_public: &self.owner_public,
            storage_ref: &self.storage_ref,
            prev_block_digest: &self.prev_block_digest,
        }))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
    by_did: BTreeMap<Did, usize>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    /// Digest of the last block, or zeros for an empty chain.
    pub fn head(&self) -> Hash256 {
        self.records.last().map(|r| r.block_digest).unwrap_or_default()
    }

    pub fn register_did(
        &mut self,
        doc_digest: Hash256,
        owner_public: PublicKey,
        storage_ref: impl Into<String>,
    ) -> Result<(Did, LedgerRecord), LedgerError> {
        let did = Did::from_document_digest(&doc_digest);
        // Two digests sharing a 128-bit prefix would collide on the DID;
        // treat that the same as a duplicate registration.
        if self.by_did.contains_key(&did) {
            return Err(LedgerError::AlreadyRegistered(doc_digest));
        }
        let mut record = LedgerRecord {
            did: did.clone(),
            doc_digest,
            owner_public,
            storage_ref: storage_ref.into(),
            prev_block_digest: self.head(),
            block_digest: Hash256::default(),
        };
        record.block_digest = record.compute_block_digest();
        self.by_did.insert(did.clone(), self.records.len());
        self.records.push(record.clone());
        Ok((did, record))
    }

    pub fn resolve(&self, did: &Did) -> Result<&LedgerRecord, LedgerError> {
        self.by_did
            .get(did)
            .map(|&i| &self.records[i])
            .ok_or_else(|| LedgerError::NotFound(did.clone()))
    }

    /// Recomputes every block digest and link. Also checks that each DID is
    /// the one derived from its document digest.
    pub fn verify_chain(&self) -> bool {
        let mut prev = Hash256::default();
        for r in &self.records {
            if r.prev_block_digest != prev
                || r.block_digest != r.compute_block_digest()
                || r.did != Did::from_document_digest(&r.doc_digest)
            {
                return false;
            }
            prev = r.block_digest;
        }
        true
    }

    /// Canonical export: a JSON array of records, sorted keys, hex digests.
    pub fn export(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(&self.records)
    }

    /// Loads an export without validating the chain, so a tampered file can
    /// still be inspected with [`Ledger::verify_chain`]. Empty input is an
    /// empty ledger; anything else must be canonical.
    pub fn import(bytes: &[u8]) -> Result<Self, LedgerError> {
        let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
        if body.is_empty() {
            return Ok(Ledger::new());
        }
        let records: Vec<LedgerRecord> =
            canonical::from_canonical_bytes(body).map_err(|e| LedgerError::Malformed(e.to_string()))?;
        let mut by_did = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if by_did.insert(r.did.clone(), i).is_some() {
                return Err(LedgerError::Malformed(format!("duplicate DID {}", r.did)));
            }
        }
        Ok(Ledger { records, by_did })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyRole};
    use std::collections::HashSet;

    fn owner(seed: u64) -> PublicKey {
        *generate_keypair(KeyRole::Lkp, seed).public()
    }

    fn sample_ledger(n: u8) -> Ledger {
        let mut l = Ledger::new();
        for i in 0..n {
            l.register_did(digest(&[i]), owner(i.into()), format!("hub://hub-{i}/obj")).unwrap();
        }
        l
    }

    #[test]
    fn did_string_roundtrip() {
        let did = Did::from_document_digest(&digest(b"genesis"));
        let s = did.to_string();
        assert!(s.starts_with("did:horcrux:"));
        assert_eq!(did.id().len(), 26);
        assert_eq!(s.parse::<Did>().unwrap(), did);
        assert!(s.to_uppercase().parse::<Did>().is_err());
        assert!("did:other:aaaaaaaaaaaaaaaaaaaaaaaaaa".parse::<Did>().is_err());
        assert!("did:horcrux:short".parse::<Did>().is_err());
    }

    #[test]
    fn did_determinism_and_uniqueness() {
        assert_eq!(Did::from_document_digest(&digest(b"a")), Did::from_document_digest(&digest(b"a")));
        let dids: HashSet<Did> =
            (0u32..10_000).map(|i| Did::from_document_digest(&digest(&i.to_be_bytes()))).collect();
        assert_eq!(dids.len(), 10_000);
    }

    #[test]
    fn register_and_resolve() {
        let mut l = Ledger::new();
        let (did, rec) = l.register_did(digest(b"doc"), owner(1), "hub://a/b").unwrap();
        let got = l.resolve(&did).unwrap();
        assert_eq!(got, &rec);
        assert_eq!(got.doc_digest, digest(b"doc"));
        assert_eq!(got.storage_ref, "hub://a/b");
        assert_eq!(rec.prev_block_digest, Hash256::default());
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut l = Ledger::new();
        l.register_did(digest(b"doc"), owner(1), "x").unwrap();
        assert_eq!(
            l.register_did(digest(b"doc"), owner(2), "y"),
            Err(LedgerError::AlreadyRegistered(digest(b"doc")))
        );
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn chain_links() {
        let l = sample_ledger(2);
        assert_eq!(l.records()[1].prev_block_digest, l.records()[0].block_digest);
        assert!(l.verify_chain());
        assert!(Ledger::new().verify_chain());
    }

    #[test]
    fn resolve_is_read_only() {
        let l = sample_ledger(3);
        let head = l.head();
        let did = l.records()[1].did.clone();
        for _ in 0..1000 {
            l.resolve(&did).unwrap();
        }
        assert_eq!(l.head(), head);
        let unknown = Did::from_document_digest(&digest(b"nope"));
        assert_eq!(l.resolve(&unknown), Err(LedgerError::NotFound(unknown)));
    }

    #[test]
    fn export_import_roundtrip() {
        let l = sample_ledger(3);
        let bytes = l.export();
        let back = Ledger::import(&bytes).unwrap();
        assert_eq!(back.records(), l.records());
        assert!(back.verify_chain());
        assert!(Ledger::import(b"").unwrap().is_empty());
    }

    #[test]
    fn every_single_bit_flip_of_the_export_is_detected() {
        let bytes = sample_ledger(3).export();
        for bit in 0..bytes.len() * 8 {
            let mut m = bytes.clone();
            m[bit / 8] ^= 1 << (bit % 8);
            let detected = match Ledger::import(&m) {
                Err(_) => true,
                Ok(l) => !l.verify_chain(),
            };
            assert!(detected, "undetected flip at bit {bit}");
        }
    }

    #[test]
    fn in_memory_field_mutation_breaks_chain() {
        let l = sample_ledger(3);
        let mut recs = l.records().to_vec();
        recs[1].storage_ref.push('x');
        let tampered = Ledger::import(&canonical::to_canonical_bytes(&recs)).unwrap();
        assert!(!tampered.verify_chain());
    }
}
