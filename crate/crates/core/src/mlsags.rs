//! Linkable ring signatures (single-layer LSAG over Ristretto255) with
//! deterministic key images `y0 = sk · H_p(pk)`.

use std::fmt;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT as G;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand::seq::SliceRandom;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha512};
use thiserror::Error;

use crate::encoding::{put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LrsError {
    #[error("ring is empty")]
    EmptyRing,
    #[error("signer key is not at the given ring position")]
    SignerNotInRing,
    #[error("ring contains a duplicate key")]
    DuplicateRingKey,
    #[error("not enough registered keys to form a ring")]
    RingTooSmall,
}

mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s)
            .map_err(serde::de::Error::custom)?
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

/// Compressed group element used as a seed public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex32")] pub [u8; 32]);

/// The linkability tag `y0`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyImage(#[serde(with = "hex32")] pub [u8; 32]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..16])
    }
}

impl fmt::Debug for KeyImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyImage({})", &hex::encode(self.0)[..16])
    }
}

impl PublicKey {
    fn point(&self) -> Option<RistrettoPoint> {
        CompressedRistretto(self.0).decompress()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl KeyImage {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Try-and-increment: hash `(pk, counter)` to 32 bytes and accept the first
/// candidate that decodes to a non-identity point.
pub fn hash_to_point(pk: &PublicKey) -> RistrettoPoint {
    for ctr in 0u64.. {
        let mut h = Hasher::new(Domain::HashToPoint);
        h.field(&pk.0).update(&ctr.to_le_bytes());
        if let Some(p) = CompressedRistretto(h.finish().0).decompress() {
            if p != RistrettoPoint::identity() {
                return p;
            }
        }
    }
    unreachable!("counter space exhausted")
}

pub struct SeedKeyPair {
    sk: Scalar,
    pk: PublicKey,
}

impl SeedKeyPair {
    pub fn generate<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Self {
        let mut wide = [0u8; 64];
        rng.fill_bytes(&mut wide);
        Self::from_scalar(Scalar::from_bytes_mod_order_wide(&wide))
    }

    pub fn from_scalar(sk: Scalar) -> Self {
        let pk = PublicKey((sk * G).compress().to_bytes());
        Self { sk, pk }
    }

    pub fn public(&self) -> PublicKey {
        self.pk
    }

    pub fn key_image(&self) -> KeyImage {
        KeyImage((self.sk * hash_to_point(&self.pk)).compress().to_bytes())
    }
}

impl fmt::Debug for SeedKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SeedKeyPair({:?})", self.pk)
    }
}

pub fn ring_digest(ring: &[PublicKey]) -> Digest32 {
    let mut h = Hasher::new(Domain::RingMembers);
    h.update(&(ring.len() as u64).to_le_bytes());
    for pk in ring {
        h.update(&pk.0);
    }
    h.finish()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingSignature {
    pub y0: KeyImage,
    pub c0: Scalar,
    pub responses: Vec<Scalar>,
    pub ring_digest: Digest32,
}

fn challenge(msg: &[u8], ring: &Digest32, y0: &[u8; 32], l: &RistrettoPoint, r: &RistrettoPoint) -> Scalar {
    let mut h = Sha512::new();
    let tag = b"admission/lsag-challenge/v1";
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag);
    h.update((msg.len() as u64).to_le_bytes());
    h.update(msg);
    h.update(ring.0);
    h.update(y0);
    h.update(l.compress().as_bytes());
    h.update(r.compress().as_bytes());
    Scalar::from_hash(h)
}

fn check_ring(ring: &[PublicKey]) -> Result<(), LrsError> {
    if ring.is_empty() {
        return Err(LrsError::EmptyRing);
    }
    let mut sorted = ring.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(LrsError::DuplicateRingKey);
    }
    Ok(())
}

fn random_scalar<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

pub fn lrs_sign<R: RngCore + CryptoRng + ?Sized>(
    msg: &[u8],
    ring: &[PublicKey],
    signer_index: usize,
    kp: &SeedKeyPair,
    rng: &mut R,
) -> Result<RingSignature, LrsError> {
    check_ring(ring)?;
    if ring.get(signer_index) != Some(&kp.pk) {
        return Err(LrsError::SignerNotInRing);
    }
    let n = ring.len();
    let points: Vec<RistrettoPoint> =
        ring.iter().map(|pk| pk.point().ok_or(LrsError::SignerNotInRing)).collect::<Result<_, _>>()?;
    let hp: Vec<RistrettoPoint> = ring.iter().map(hash_to_point).collect();
    let image = kp.sk * hp[signer_index];
    let y0 = image.compress().to_bytes();
    let digest = ring_digest(ring);

    let alpha = random_scalar(rng);
    let mut c = vec![Scalar::ZERO; n];
    let mut s = vec![Scalar::ZERO; n];
    let mut next = (signer_index + 1) % n;
    c[next] = challenge(msg, &digest, &y0, &(alpha * G), &(alpha * hp[signer_index]));
    while next != signer_index {
        let i = next;
        s[i] = random_scalar(rng);
        let l = s[i] * G + c[i] * points[i];
        let r = s[i] * hp[i] + c[i] * image;
        next = (i + 1) % n;
        c[next] = challenge(msg, &digest, &y0, &l, &r);
    }
    s[signer_index] = alpha - c[signer_index] * kp.sk;
    Ok(RingSignature { y0: KeyImage(y0), c0: c[0], responses: s, ring_digest: digest })
}

pub fn lrs_verify(msg: &[u8], ring: &[PublicKey], sig: &RingSignature) -> bool {
    if check_ring(ring).is_err() || sig.responses.len() != ring.len() || sig.ring_digest != ring_digest(ring) {
        return false;
    }
    let Some(image) = CompressedRistretto(sig.y0.0).decompress() else {
        return false;
    };
    if image == RistrettoPoint::identity() {
        return false;
    }
    let mut c = sig.c0;
    for (pk, s) in ring.iter().zip(&sig.responses) {
        let Some(p) = pk.point() else {
            return false;
        };
        let l = s * G + c * p;
        let r = s * hash_to_point(pk) + c * image;
        c = challenge(msg, &sig.ring_digest, &sig.y0.0, &l, &r);
    }
    c == sig.c0
}

/// Same-signer test. Messages and rings are irrelevant to the linking rule.
pub fn lrs_link(a: &RingSignature, b: &RingSignature) -> bool {
    a.y0 == b.y0
}

/// Ring of `size` distinct keys drawn from `registry`, always containing
/// `signer`, in random order. Returns the ring and the signer's position.
pub fn select_ring<R: RngCore + ?Sized>(
    registry: &[PublicKey],
    signer: PublicKey,
    size: usize,
    rng: &mut R,
) -> Result<(Vec<PublicKey>, usize), LrsError> {
    let mut decoys: Vec<PublicKey> = registry.iter().copied().filter(|pk| *pk != signer).collect();
    decoys.sort();
    decoys.dedup();
    if size == 0 || decoys.len() + 1 < size {
        return Err(LrsError::RingTooSmall);
    }
    let mut ring: Vec<PublicKey> = decoys.choose_multiple(rng, size - 1).copied().collect();
    ring.push(signer);
    ring.shuffle(rng);
    let idx = ring.iter().position(|pk| *pk == signer).expect("signer inserted");
    Ok((ring, idx))
}

impl Encode for PublicKey {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for PublicKey {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self(r.array32()?))
    }
}

impl Encode for KeyImage {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl Decode for KeyImage {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self(r.array32()?))
    }
}

fn decode_scalar(r: &mut Reader<'_>) -> Result<Scalar, DecodeError> {
    Option::from(Scalar::from_canonical_bytes(r.array32()?)).ok_or(DecodeError::Invalid("non-canonical scalar"))
}

impl Encode for RingSignature {
    /// `y0 ‖ c0 ‖ n ‖ s_0..s_{n-1} ‖ ring_digest`.
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.y0.encode_to(out);
        out.extend_from_slice(self.c0.as_bytes());
        put_u64(out, self.responses.len() as u64);
        for s in &self.responses {
            out.extend_from_slice(s.as_bytes());
        }
        self.ring_digest.encode_to(out);
    }
}

impl Decode for RingSignature {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let y0 = KeyImage::decode_from(r)?;
        let c0 = decode_scalar(r)?;
        let n = r.len_prefix(32)?;
        let responses = (0..n).map(|_| decode_scalar(r)).collect::<Result<_, _>>()?;
        let ring_digest = Digest32::decode_from(r)?;
        Ok(Self { y0, c0, responses, ring_digest })
    }
}

impl Serialize for RingSignature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for RingSignature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        RingSignature::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}
