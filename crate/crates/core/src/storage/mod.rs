//! Off-chain identity hubs holding signed DID documents.
//!
//! Hubs are content addressed: an object's key is the hex digest of its
//! canonical bytes, so anyone holding a [`StorageRef`] can tell whether what
//! they fetched is what was stored. Two backends share the [`IdentityHub`]
//! interface: [`MemoryHub`] for tests and simulation, [`FileHub`] for CLI
//! persistence (one file per object, named by its key).

mod document;

pub use document::{DidDocument, ServiceEndpoint, UnsignedDocument};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::canonical;
use crate::crypto::digest;

const LOCATOR_SCHEME: &str = "hub://";

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("document signature does not verify")]
    InvalidSignature,
    #[error("hub {0} refused the write")]
    WriteFailed(String),
    #[error("object {0} not found")]
    NotFound(String),
    #[error("capability token missing or wrong")]
    Unauthorized,
    #[error("position {position} outside object of {len} bytes")]
    OutOfRange { position: usize, len: usize },
    #[error("stored document does not parse: {0}")]
    Malformed(String),
    #[error("bad storage locator {0:?}")]
    BadLocator(String),
    #[error("unknown hub {0}")]
    UnknownHub(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Where a document lives: hub plus content-address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StorageRef {
    pub hub_id: String,
    pub object_key: String,
}

impl StorageRef {
    /// Opaque locator string recorded on the ledger.
    pub fn locator(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for StorageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{LOCATOR_SCHEME}{}/{}", self.hub_id, self.object_key)
    }
}

impl FromStr for StorageRef {
    type Err = StorageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (hub_id, object_key) = s
            .strip_prefix(LOCATOR_SCHEME)
            .and_then(|rest| rest.split_once('/'))
            .ok_or_else(|| StorageError::BadLocator(s.to_string()))?;
        if hub_id.is_empty() || object_key.is_empty() {
            return Err(StorageError::BadLocator(s.to_string()));
        }
        Ok(StorageRef { hub_id: hub_id.to_string(), object_key: object_key.to_string() })
    }
}

/// Splits a ledger `storage_ref` that lists several replicas, comma
/// separated.
pub fn parse_locators(locators: &str) -> Result<Vec<StorageRef>, StorageError> {
    locators.split(',').map(str::parse).collect()
}

pub fn join_locators(refs: &[StorageRef]) -> String {
    refs.iter().map(StorageRef::locator).collect::<Vec<_>>().join(",")
}

/// Per-hub behaviour knobs.
#[derive(Debug, Clone, Default)]
pub struct HubPolicy {
    /// Every write fails.
    pub failing: bool,
    /// Reads must present this token (delegated access for holders).
    pub capability: Option<String>,
}

pub trait IdentityHub: Send {
    fn hub_id(&self) -> &str;
    fn policy(&self) -> &HubPolicy;
    fn policy_mut(&mut self) -> &mut HubPolicy;

    fn load(&self, object_key: &str) -> Result<Option<Vec<u8>>, StorageError>;
    fn store(&mut self, object_key: &str, bytes: &[u8]) -> Result<(), StorageError>;
    fn remove(&mut self, object_key: &str) -> Result<bool, StorageError>;
    fn object_keys(&self) -> Result<Vec<String>, StorageError>;

    /// Stores the canonical form of a correctly signed document.
    fn put_document(&mut self, doc: &DidDocument) -> Result<StorageRef, StorageError> {
        if !doc.verify_signature() {
            return Err(StorageError::InvalidSignature);
        }
        if self.policy().failing {
            return Err(StorageError::WriteFailed(self.hub_id().to_string()));
        }
        let bytes = doc.genesis_bytes();
        let object_key = digest(&bytes).to_hex();
        self.store(&object_key, &bytes)?;
        Ok(StorageRef { hub_id: self.hub_id().to_string(), object_key })
    }

    fn contains(&self, r: &StorageRef) -> Result<bool, StorageError> {
        Ok(r.hub_id == self.hub_id() && self.load(&r.object_key)?.is_some())
    }

    /// Raw stored bytes. A reference to another hub is simply not found here.
    fn get_bytes(&self, r: &StorageRef, capability: Option<&str>) -> Result<Vec<u8>, StorageError> {
        if let Some(required) = &self.policy().capability {
            if capability != Some(required.as_str()) {
                return Err(StorageError::Unauthorized);
            }
        }
        if r.hub_id != self.hub_id() {
            return Err(StorageError::NotFound(r.locator()));
        }
        self.load(&r.object_key)?.ok_or_else(|| StorageError::NotFound(r.locator()))
    }

    /// Parses whatever is stored. Does not compare against the object key;
    /// callers that need integrity check the digest of [`get_bytes`].
    ///
    /// [`get_bytes`]: IdentityHub::get_bytes
    fn get_document(&self, r: &StorageRef, capability: Option<&str>) -> Result<DidDocument, StorageError> {
        let bytes = self.get_bytes(r, capability)?;
        canonical::from_canonical_bytes(&bytes).map_err(|e| StorageError::Malformed(e.to_string()))
    }

    /// Overwrites one stored byte without touching the object key.
    fn tamper(&mut self, r: &StorageRef, position: usize, new_byte: u8) -> Result<(), StorageError> {
        if r.hub_id != self.hub_id() {
            return Err(StorageError::NotFound(r.locator()));
        }
        let mut bytes = self.load(&r.object_key)?.ok_or_else(|| StorageError::NotFound(r.locator()))?;
        let len = bytes.len();
        *bytes.get_mut(position).ok_or(StorageError::OutOfRange { position, len })? = new_byte;
        self.store(&r.object_key, &bytes)
    }

    fn delete(&mut self, r: &StorageRef) -> Result<(), StorageError> {
        if r.hub_id != self.hub_id() || !self.remove(&r.object_key)? {
            return Err(StorageError::NotFound(r.locator()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MemoryHub {
    id: String,
    policy: HubPolicy,
    objects: BTreeMap<String, Vec<u8>>,
}

impl MemoryHub {
    pub fn new(id: impl Into<String>) -> Self {
        MemoryHub { id: id.into(), policy: HubPolicy::default(), objects: BTreeMap::new() }
    }

    pub fn failing(id: impl Into<String>) -> Self {
        let mut hub = Self::new(id);
        hub.policy.failing = true;
        hub
    }
}

impl IdentityHub for MemoryHub {
    fn hub_id(&self) -> &str {
        &self.id
    }

    fn policy(&self) -> &HubPolicy {
        &self.policy
    }

    fn policy_mut(&mut self) -> &mut HubPolicy {
        &mut self.policy
    }

    fn load(&self, object_key: &str) -> Result<Option<Vec<u8>>, StorageError> {
        Ok(self.objects.get(object_key).cloned())
    }

    fn store(&mut self, object_key: &str, bytes: &[u8]) -> Result<(), StorageError> {
        self.objects.insert(object_key.to_string(), bytes.to_vec());
        Ok(())
    }

    fn remove(&mut self, object_key: &str) -> Result<bool, StorageError> {
        Ok(self.objects.remove(object_key).is_some())
    }

    fn object_keys(&self) -> Result<Vec<String>, StorageError> {
        Ok(self.objects.keys().cloned().collect())
    }
}

/// Directory-backed hub: `<dir>/<object_key>` holds the canonical document.
#[derive(Debug, Clone)]
pub struct FileHub {
    id: String,
    policy: HubPolicy,
    dir: PathBuf,
}

impl FileHub {
    pub fn open(id: impl Into<String>, dir: impl AsRef<Path>) -> Result<Self, StorageError> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(FileHub { id: id.into(), policy: HubPolicy::default(), dir: dir.as_ref().to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, object_key: &str) -> Result<PathBuf, StorageError> {
        // Keys are hex digests; anything else could escape the directory.
        if object_key.is_empty() || !object_key.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(StorageError::NotFound(object_key.to_string()));
        }
        Ok(self.dir.join(object_key))
    }
}

impl IdentityHub for FileHub {
    fn hub_id(&self) -> &str {
        &self.id
    }

    fn policy(&self) -> &HubPolicy {
        &self.policy
    }

    fn policy_mut(&mut self) -> &mut HubPolicy {
        &mut self.policy
    }

    fn load(&self, object_key: &str) -> Result<Option<Vec<u8>>, StorageError> {
        match fs::read(self.path(object_key)?) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn store(&mut self, object_key: &str, bytes: &[u8]) -> Result<(), StorageError> {
        fs::write(self.path(object_key)?, bytes)?;
        Ok(())
    }

    fn remove(&mut self, object_key: &str) -> Result<bool, StorageError> {
        match fs::remove_file(self.path(object_key)?) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(e.into()),
        }
    }

    fn object_keys(&self) -> Result<Vec<String>, StorageError> {
        let mut keys = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            if let Some(name) = entry?.file_name().to_str() {
                keys.push(name.to_string());
            }
        }
        keys.sort();
        Ok(keys)
    }
}

/// The set of hubs reachable in a deployment, by id.
#[derive(Default)]
pub struct HubRegistry {
    hubs: BTreeMap<String, Box<dyn IdentityHub>>,
}

impl fmt::Debug for HubRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.hubs.keys()).finish()
    }
}

impl HubRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, hub: impl IdentityHub + 'static) {
        self.hubs.insert(hub.hub_id().to_string(), Box::new(hub));
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.hubs.keys().map(String::as_str)
    }

    pub fn get(&self, hub_id: &str) -> Result<&dyn IdentityHub, StorageError> {
        self.hubs.get(hub_id).map(|h| h.as_ref()).ok_or_else(|| StorageError::UnknownHub(hub_id.to_string()))
    }

    pub fn get_mut(&mut self, hub_id: &str) -> Result<&mut (dyn IdentityHub + 'static), StorageError> {
        self.hubs
            .get_mut(hub_id)
            .map(|h| h.as_mut())
            .ok_or_else(|| StorageError::UnknownHub(hub_id.to_string()))
    }

    pub fn fetch(&self, r: &StorageRef, capability: Option<&str>) -> Result<Vec<u8>, StorageError> {
        self.get(&r.hub_id)?.get_bytes(r, capability)
    }

    /// Every stored object in every hub, for leakage scans.
    pub fn all_objects(&self) -> Result<Vec<(StorageRef, Vec<u8>)>, StorageError> {
        let mut out = Vec::new();
        for hub in self.hubs.values() {
            for key in hub.object_keys()? {
                if let Some(bytes) = hub.load(&key)? {
                    out.push((StorageRef { hub_id: hub.hub_id().to_string(), object_key: key }, bytes));
                }
            }
        }
        Ok(out)
    }
}
