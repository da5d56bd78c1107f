//! Content-addressed object store with signed, monotonically sequenced name
//! pointers. Objects live in memory and, optionally, one file per address
//! under `objects/`; pointer histories are appended to `names/<owner>.log`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{hash, put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContentAddress(pub Digest32);

impl ContentAddress {
    pub fn of(bytes: &[u8]) -> Self {
        Self(hash(Domain::ContentAddress, bytes))
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }
}

impl fmt::Debug for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentAddress({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for ContentAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StoreError {
    #[error("object {0} failed digest verification")]
    IntegrityError(ContentAddress),
    #[error("object {0} not found")]
    NotFound(ContentAddress),
    #[error("stale pointer update for {owner}: sequence {got} does not exceed {latest}")]
    StaleUpdate { owner: String, latest: u64, got: u64 },
    #[error("pointer signature does not verify under {0}")]
    Unauthorized(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

/// A signed binding `owner → target` at a given sequence number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamePointer {
    pub owner: [u8; 32],
    pub target: ContentAddress,
    pub sequence: u64,
    pub signature: [u8; 64],
}

fn pointer_message(owner: &[u8; 32], target: &ContentAddress, sequence: u64) -> Digest32 {
    let mut h = Hasher::new(Domain::NamePointer);
    h.update(owner).update(target.0.as_bytes()).update(&sequence.to_le_bytes());
    h.finish()
}

impl NamePointer {
    pub fn sign(key: &SigningKey, target: ContentAddress, sequence: u64) -> Self {
        let owner = key.verifying_key().to_bytes();
        let signature = key.sign(pointer_message(&owner, &target, sequence).as_bytes()).to_bytes();
        Self { owner, target, sequence, signature }
    }

    pub fn verify(&self) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.owner) else {
            return false;
        };
        let msg = pointer_message(&self.owner, &self.target, self.sequence);
        vk.verify(msg.as_bytes(), &Signature::from_bytes(&self.signature)).is_ok()
    }

    pub fn owner_hex(&self) -> String {
        hex::encode(self.owner)
    }
}

impl Encode for NamePointer {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.owner);
        self.target.0.encode_to(out);
        put_u64(out, self.sequence);
        out.extend_from_slice(&self.signature);
    }
}

impl Decode for NamePointer {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let owner = r.array32()?;
        let target = ContentAddress(Digest32::decode_from(r)?);
        let sequence = r.u64()?;
        let mut signature = [0u8; 64];
        signature.copy_from_slice(r.take(64)?);
        Ok(Self { owner, target, sequence, signature })
    }
}

#[derive(Default)]
struct Inner {
    objects: HashMap<ContentAddress, Vec<u8>>,
    names: BTreeMap<[u8; 32], Vec<NamePointer>>,
}

/// Thread-safe store. Pointer updates are linearized by the write lock.
pub struct Store {
    inner: RwLock<Inner>,
    dir: Option<PathBuf>,
}

impl Default for Store {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self { inner: RwLock::new(Inner::default()), dir: None }
    }

    /// Opens a directory-backed store, replaying existing pointer logs.
    /// Objects are read from disk lazily and verified on every read.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("objects"))?;
        fs::create_dir_all(dir.join("names"))?;
        let mut inner = Inner::default();
        for entry in fs::read_dir(dir.join("names"))? {
            let text = fs::read_to_string(entry?.path())?;
            for line in text.lines().filter(|l| !l.is_empty()) {
                let bytes = hex::decode(line).map_err(|_| DecodeError::Invalid("pointer log line"))?;
                let ptr = NamePointer::from_bytes(&bytes)?;
                Self::accept(&mut inner, &ptr)?;
                inner.names.entry(ptr.owner).or_default().push(ptr);
            }
        }
        Ok(Self { inner: RwLock::new(inner), dir: Some(dir) })
    }

    fn object_path(&self, addr: &ContentAddress) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("objects").join(addr.to_hex()))
    }

    /// Idempotent; returns the address of `bytes`.
    pub fn put(&self, bytes: &[u8]) -> Result<ContentAddress, StoreError> {
        let addr = ContentAddress::of(bytes);
        let mut inner = self.inner.write().expect("store lock");
        if let Some(path) = self.object_path(&addr) {
            if !path.exists() {
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, bytes)?;
                fs::rename(&tmp, &path)?;
            }
        } else {
            inner.objects.entry(addr).or_insert_with(|| bytes.to_vec());
        }
        Ok(addr)
    }

    pub fn put_encoded<T: Encode + ?Sized>(&self, value: &T) -> Result<ContentAddress, StoreError> {
        self.put(&value.to_bytes())
    }

    pub fn get(&self, addr: &ContentAddress) -> Result<Vec<u8>, StoreError> {
        let bytes = match self.object_path(addr) {
            Some(path) => match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound(*addr)),
                Err(e) => return Err(e.into()),
            },
            None => self.inner.read().expect("store lock").objects.get(addr).cloned().ok_or(StoreError::NotFound(*addr))?,
        };
        if ContentAddress::of(&bytes) != *addr {
            return Err(StoreError::IntegrityError(*addr));
        }
        Ok(bytes)
    }

    pub fn get_decoded<T: Decode>(&self, addr: &ContentAddress) -> Result<T, StoreError> {
        Ok(T::from_bytes(&self.get(addr)?)?)
    }

    pub fn contains(&self, addr: &ContentAddress) -> bool {
        match self.object_path(addr) {
            Some(p) => p.exists(),
            None => self.inner.read().expect("store lock").objects.contains_key(addr),
        }
    }

    fn accept(inner: &mut Inner, ptr: &NamePointer) -> Result<(), StoreError> {
        if !ptr.verify() {
            return Err(StoreError::Unauthorized(ptr.owner_hex()));
        }
        let latest = inner.names.get(&ptr.owner).and_then(|h| h.last()).map(|p| p.sequence);
        match latest {
            Some(latest) if ptr.sequence <= latest => {
                Err(StoreError::StaleUpdate { owner: ptr.owner_hex(), latest, got: ptr.sequence })
            }
            _ => Ok(()),
        }
    }

    /// Accepts `ptr` iff its signature verifies and its sequence exceeds the
    /// owner's latest accepted sequence.
    pub fn publish(&self, ptr: &NamePointer) -> Result<(), StoreError> {
        let mut inner = self.inner.write().expect("store lock");
        Self::accept(&mut inner, ptr)?;
        if let Some(dir) = &self.dir {
            let mut log =
                OpenOptions::new().create(true).append(true).open(dir.join("names").join(format!("{}.log", ptr.owner_hex())))?;
            writeln!(log, "{}", hex::encode(ptr.to_bytes()))?;
        }
        inner.names.entry(ptr.owner).or_default().push(ptr.clone());
        Ok(())
    }

    pub fn resolve(&self, owner: &[u8; 32]) -> Option<ContentAddress> {
        self.inner.read().expect("store lock").names.get(owner).and_then(|h| h.last()).map(|p| p.target)
    }

    /// Every accepted pointer of `owner`, oldest first.
    pub fn history(&self, owner: &[u8; 32]) -> Vec<NamePointer> {
        self.inner.read().expect("store lock").names.get(owner).cloned().unwrap_or_default()
    }
}
