use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::{self, digest, CryptoError, Envelope, Hash256, KeyPair, PublicKey, Signature};
use crate::ledger::Did;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceEndpoint {
    pub role: String,
    pub locator: String,
}

impl ServiceEndpoint {
    pub fn new(role: impl Into<String>, locator: impl Into<String>) -> Self {
        ServiceEndpoint { role: role.into(), locator: locator.into() }
    }
}

/// Document contents covered by the issuer signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnsignedDocument {
    pub issuer_public: PublicKey,
    pub enrollment_public: PublicKey,
    /// Remote share(s), sealed for the credential key.
    pub auth_credential: Envelope,
    /// digest(local share bytes || enrollment public key), registered at
    /// enrollment so a verifier can check local-mode possession tags.
    pub share_commitment: Hash256,
    pub service_endpoints: Vec<ServiceEndpoint>,
}

/// Signed DID document as stored in an identity hub.
///
/// The stored form never carries `did`: the DID is derived from the digest
/// of this very form, so it is only attached after resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DidDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub did: Option<Did>,
    pub issuer_public: PublicKey,
    pub enrollment_public: PublicKey,
    pub auth_credential: Envelope,
    pub share_commitment: Hash256,
    pub service_endpoints: Vec<ServiceEndpoint>,
    pub issuer_signature: Signature,
}

impl DidDocument {
    pub fn issue(fields: UnsignedDocument, issuer: &KeyPair) -> Result<Self, CryptoError> {
        let signature = crypto::sign(&canonical::to_canonical_bytes(&fields), issuer)?;
        Ok(DidDocument {
            did: None,
            issuer_public: fields.issuer_public,
            enrollment_public: fields.enrollment_public,
            auth_credential: fields.auth_credential,
            share_commitment: fields.share_commitment,
            service_endpoints: fields.service_endpoints,
            issuer_signature: signature,
        })
    }

    pub fn unsigned(&self) -> UnsignedDocument {
        UnsignedDocument {
            issuer_public: self.issuer_public,
            enrollment_public: self.enrollment_public,
            auth_credential: self.auth_credential.clone(),
            share_commitment: self.share_commitment,
            service_endpoints: self.service_endpoints.clone(),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(&self.unsigned())
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.signing_bytes(), &self.issuer_signature, &self.issuer_public)
    }

    /// Canonical stored form (without `did`).
    pub fn genesis_bytes(&self) -> Vec<u8> {
        if self.did.is_none() {
            return canonical::to_canonical_bytes(self);
        }
        let mut genesis = self.clone();
        genesis.did = None;
        canonical::to_canonical_bytes(&genesis)
    }

    pub fn digest(&self) -> Hash256 {
        digest(&self.genesis_bytes())
    }

    pub fn endpoint(&self, role: &str) -> Option<&str> {
        self.service_endpoints.iter().find(|e| e.role == role).map(|e| e.locator.as_str())
    }
}
