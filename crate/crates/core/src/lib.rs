//! Decentralized biometric authentication for self-sovereign identity.
//!
//! A biometric template is split into shares. One share stays on the user's
//! device; the rest are sealed into a signed DID document held by an
//! off-chain identity hub, and the document digest is registered on a
//! hash-chained ledger. Any verifier that trusts the issuer can later resolve
//! the DID, check the document against the ledger, and match a fresh capture
//! either on its own server (remote mode) or on the device (local mode).
//!
//! [`harness`] drives the actors through a deterministic simulated network
//! with optional adversaries.

pub mod biometrics;
pub mod canonical;
pub mod crypto;
pub mod harness;
pub mod ledger;
pub mod sharing;
pub mod protocol;
pub mod storage;
