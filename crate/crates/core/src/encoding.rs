//! Canonical byte encoding and domain-separated hashing.
//!
//! Every digest in the crate (content addresses, Fiat-Shamir challenges,
//! share bindings, ledger snapshots) is computed over the canonical encoding
//! defined here: fixed-width little-endian integers, `u64` length prefixes for
//! variable-length sequences, and a leading format version where an object is
//! persisted on its own.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Version byte prepended to standalone persisted objects.
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input (needed {needed} more bytes)")]
    Truncated { needed: usize },
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("invalid encoding: {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes after object")]
    Trailing(usize),
}

/// Types with a unique byte representation.
pub trait Encode {
    fn encode_to(&self, out: &mut Vec<u8>);

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_to(&mut out);
        out
    }
}

pub trait Decode: Sized {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes a complete buffer, rejecting trailing bytes.
    fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < len {
            return Err(DecodeError::Truncated { needed: len - self.buf.len() });
        }
        let (head, tail) = self.buf.split_at(len);
        self.buf = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn array32(&mut self) -> Result<[u8; 32], DecodeError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    /// Reads a `u64` length prefix, bounding it by the remaining input so a
    /// corrupt prefix cannot trigger a huge allocation.
    pub fn len_prefix(&mut self, min_item_size: usize) -> Result<usize, DecodeError> {
        let len = self.u64()?;
        let max = self.buf.len() / min_item_size.max(1);
        if len > max as u64 {
            return Err(DecodeError::Invalid("length prefix exceeds input"));
        }
        Ok(len as usize)
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.len_prefix(1)?;
        Ok(self.take(len)?.to_vec())
    }

    pub fn version(&mut self) -> Result<(), DecodeError> {
        match self.u8()? {
            FORMAT_VERSION => Ok(()),
            v => Err(DecodeError::Version(v)),
        }
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::Trailing(self.buf.len()))
        }
    }
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u64(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

pub fn put_seq<T: Encode>(out: &mut Vec<u8>, items: &[T]) {
    put_u64(out, items.len() as u64);
    for item in items {
        item.encode_to(out);
    }
}

pub fn get_seq<T: Decode>(r: &mut Reader<'_>, min_item_size: usize) -> Result<Vec<T>, DecodeError> {
    let len = r.len_prefix(min_item_size)?;
    (0..len).map(|_| T::decode_from(r)).collect()
}

impl Encode for u64 {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u64(out, *self);
    }
}

impl Decode for u64 {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.u64()
    }
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Digest32(#[serde(with = "hex_bytes")] pub [u8; 32]);

impl Digest32 {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Encode for Digest32 {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for Digest32 {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self(r.array32()?))
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes.try_into().map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

/// Hash domains. Each digest is `SHA-256(len(tag) || tag || payload)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Challenge,
    ContentAddress,
    InputList,
    VerifyingKey,
    Ciphertext,
    Statement,
    Share,
    Snapshot,
    Transcript,
    PhcRecord,
    CommitParams,
    Commitment,
    Shape,
    MimcConstant,
    HashToPoint,
    RingMembers,
    RingChallenge,
    NamePointer,
    KeyDerivation,
}

impl Domain {
    fn tag(self) -> &'static [u8] {
        match self {
            Domain::Challenge => b"admission/fs-challenge/v1",
            Domain::ContentAddress => b"admission/content-address/v1",
            Domain::InputList => b"admission/input-list/v1",
            Domain::VerifyingKey => b"admission/nifs-vk/v1",
            Domain::Ciphertext => b"admission/mkhe-ciphertext/v1",
            Domain::Statement => b"admission/settlement-statement/v1",
            Domain::Share => b"admission/mkhe-share/v1",
            Domain::Snapshot => b"admission/ledger-snapshot/v1",
            Domain::Transcript => b"admission/fold-transcript/v1",
            Domain::PhcRecord => b"admission/phc-record/v1",
            Domain::CommitParams => b"admission/commit-params/v1",
            Domain::Commitment => b"admission/commitment/v1",
            Domain::Shape => b"admission/r1cs-shape/v1",
            Domain::MimcConstant => b"admission/mimc-round-constant/v1",
            Domain::HashToPoint => b"admission/lsag-hash-to-point/v1",
            Domain::RingMembers => b"admission/lsag-ring/v1",
            Domain::RingChallenge => b"admission/lsag-challenge/v1",
            Domain::NamePointer => b"admission/name-pointer/v1",
            Domain::KeyDerivation => b"admission/key-derivation/v1",
        }
    }
}

/// Incremental domain-separated hasher.
pub struct Hasher(Sha256);

impl Hasher {
    pub fn new(domain: Domain) -> Self {
        let mut h = Sha256::new();
        let tag = domain.tag();
        h.update((tag.len() as u64).to_le_bytes());
        h.update(tag);
        Self(h)
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update(bytes);
        self
    }

    /// Absorbs a length-prefixed field so adjacent fields cannot shift into
    /// each other.
    pub fn field(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn encoded<T: Encode + ?Sized>(&mut self, value: &T) -> &mut Self {
        let bytes = value.to_bytes();
        self.field(&bytes)
    }

    pub fn finish(self) -> Digest32 {
        Digest32(self.0.finalize().into())
    }
}

pub fn hash(domain: Domain, bytes: &[u8]) -> Digest32 {
    let mut h = Hasher::new(domain);
    h.update(bytes);
    h.finish()
}
