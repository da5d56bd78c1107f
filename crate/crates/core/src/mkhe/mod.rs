//! Multi-key homomorphic encryption over vectors of `R_t` elements.
//!
//! Two backends share one interface. `Transparent` carries the plaintext next
//! to a random tag and is the reference oracle. `RlweToy` is BGV over an RNS
//! modulus with multi-key ciphertexts indexed by key monomials: decryption is
//! `Σ_μ c_μ · μ(s)` over `μ ∈ {1, s_i, s_i·s_j}`. One ciphertext product is
//! supported (no relinearization), so results of [`ct_mul`] sit at level 1.
//!
//! Decryption is two rounds. For each quadratic monomial `s_i·s_j` (`i < j`)
//! party `i` relays `c_ij·s_i + t·e` to party `j`; every party then publishes a
//! smudged share and [`combine`] adds them to the constant component.

mod rlwe;
mod rns;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{embed_vec, Fp, RingElement, SparseMatrix, MODULUS};
use crate::commit::CommitParams;
use crate::encoding::{
    put_seq, put_u32, put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader, FORMAT_VERSION,
};

pub use rns::{RnsContext, RnsPoly};

pub type PartyId = u32;

/// Slack kept below `q/2` after every evaluation for decryption smudging.
pub const EVAL_HEADROOM_BITS: f64 = 40.0;
/// Smudging noise exceeds the ciphertext phase by this many bits.
pub const SMUDGE_EXTRA_BITS: u32 = 20;
const MAX_RING_DIM: usize = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Transparent,
    #[serde(alias = "rlwe")]
    RlweToy,
}

impl Backend {
    fn id(self) -> u8 {
        match self {
            Backend::Transparent => 1,
            Backend::RlweToy => 2,
        }
    }

    fn from_id(id: u8) -> Result<Self, DecodeError> {
        match id {
            1 => Ok(Backend::Transparent),
            2 => Ok(Backend::RlweToy),
            _ => Err(DecodeError::Invalid("unknown backend id")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Transparent => "transparent",
            Backend::RlweToy => "rlwe-toy",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = MkheError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transparent" => Ok(Backend::Transparent),
            "rlwe-toy" | "rlwe" => Ok(Backend::RlweToy),
            _ => Err(MkheError::InvalidParams(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MkheError {
    #[error("multiplicative depth exceeded")]
    DepthExceeded,
    #[error("{what} mismatch: expected {expected}, got {got}")]
    ParamMismatch { what: &'static str, expected: usize, got: usize },
    #[error("operands use different backends")]
    BackendMismatch,
    #[error("party {0} is not in the ciphertext key set")]
    NotAParticipant(PartyId),
    #[error("missing decryption material from parties {missing:?}")]
    IncompleteShares { missing: Vec<PartyId> },
    #[error("share from party {party} is not bound to this ciphertext")]
    ShareBindingError { party: PartyId },
    #[error("noise bound 2^{bits:.1} leaves no decryption headroom")]
    NoiseBudgetExceeded { bits: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MkheParams {
    pub backend: Backend,
    pub ring_dim: usize,
}

impl MkheParams {
    pub fn new(backend: Backend, ring_dim: usize) -> Result<Self, MkheError> {
        if ring_dim < 2 || !ring_dim.is_power_of_two() || ring_dim > MAX_RING_DIM {
            return Err(MkheError::InvalidParams(format!("ring dimension {ring_dim}")));
        }
        Ok(Self { backend, ring_dim })
    }
}

/// A key monomial. `Quad(i, j)` always has `i <= j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Monomial {
    One,
    Linear(PartyId),
    Quad(PartyId, PartyId),
}

impl Monomial {
    fn degree(self) -> u8 {
        match self {
            Monomial::One => 0,
            Monomial::Linear(_) => 1,
            Monomial::Quad(..) => 2,
        }
    }

    fn times(self, other: Monomial) -> Result<Monomial, MkheError> {
        use Monomial::*;
        Ok(match (self, other) {
            (One, m) | (m, One) => m,
            (Linear(i), Linear(j)) => Quad(i.min(j), i.max(j)),
            _ => return Err(MkheError::DepthExceeded),
        })
    }

    fn encode_to(self, out: &mut Vec<u8>) {
        match self {
            Monomial::One => out.push(0),
            Monomial::Linear(i) => {
                out.push(1);
                put_u32(out, i);
            }
            Monomial::Quad(i, j) => {
                out.push(2);
                put_u32(out, i);
                put_u32(out, j);
            }
        }
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Monomial::One),
            1 => Ok(Monomial::Linear(r.u32()?)),
            2 => {
                let (i, j) = (r.u32()?, r.u32()?);
                if i > j {
                    return Err(DecodeError::Invalid("unordered quadratic monomial"));
                }
                Ok(Monomial::Quad(i, j))
            }
            _ => Err(DecodeError::Invalid("monomial tag")),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
enum PkMaterial {
    Transparent(Digest32),
    Rlwe(rlwe::RlwePublicKey),
}

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    party_id: PartyId,
    ring_dim: usize,
    material: PkMaterial,
}

impl PublicKey {
    pub fn party_id(&self) -> PartyId {
        self.party_id
    }

    pub fn backend(&self) -> Backend {
        match self.material {
            PkMaterial::Transparent(_) => Backend::Transparent,
            PkMaterial::Rlwe(_) => Backend::RlweToy,
        }
    }

    pub fn ring_dim(&self) -> usize {
        self.ring_dim
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey {{ party_id: {}, backend: {} }}", self.party_id, self.backend())
    }
}

#[derive(Clone)]
enum SkMaterial {
    Transparent([u8; 32]),
    Rlwe(rlwe::RlweSecretKey),
}

#[derive(Clone)]
pub struct MkheKeyPair {
    pk: PublicKey,
    sk: SkMaterial,
}

impl fmt::Debug for MkheKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MkheKeyPair {{ pk: {:?}, sk: .. }}", self.pk)
    }
}

impl MkheKeyPair {
    pub fn party_id(&self) -> PartyId {
        self.pk.party_id
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.pk
    }

    /// Recomputes the public key from secret material alone.
    pub fn derive_public_key(&self) -> PublicKey {
        let material = match &self.sk {
            SkMaterial::Transparent(seed) => PkMaterial::Transparent(crate::encoding::hash(Domain::KeyDerivation, seed)),
            SkMaterial::Rlwe(sk) => PkMaterial::Rlwe(rlwe::derive_public(&RnsContext::get(self.pk.ring_dim), sk)),
        };
        PublicKey { party_id: self.pk.party_id, ring_dim: self.pk.ring_dim, material }
    }
}

pub fn keygen<R: RngCore + ?Sized>(params: &MkheParams, party_id: PartyId, rng: &mut R) -> MkheKeyPair {
    let sk = match params.backend {
        Backend::Transparent => {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            SkMaterial::Transparent(seed)
        }
        Backend::RlweToy => SkMaterial::Rlwe(rlwe::keygen(&RnsContext::get(params.ring_dim), rng)),
    };
    let placeholder = PublicKey { party_id, ring_dim: params.ring_dim, material: PkMaterial::Transparent(Digest32::default()) };
    let mut kp = MkheKeyPair { pk: placeholder, sk };
    kp.pk = kp.derive_public_key();
    kp
}

#[derive(Clone, PartialEq)]
enum Payload {
    Transparent { plain: Vec<RingElement>, tag: Digest32 },
    Rlwe(BTreeMap<Monomial, Vec<RnsPoly>>),
}

/// An encrypted vector of `plain_len` ring elements.
#[derive(Clone, PartialEq)]
pub struct MultiKeyCiphertext {
    key_set: Vec<PartyId>,
    level: u8,
    plain_len: usize,
    ring_dim: usize,
    noise_log2: f64,
    payload: Payload,
}

impl fmt::Debug for MultiKeyCiphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiKeyCiphertext")
            .field("backend", &self.backend())
            .field("key_set", &self.key_set)
            .field("level", &self.level)
            .field("plain_len", &self.plain_len)
            .field("noise_log2", &self.noise_log2)
            .finish()
    }
}

impl MultiKeyCiphertext {
    pub fn backend(&self) -> Backend {
        match self.payload {
            Payload::Transparent { .. } => Backend::Transparent,
            Payload::Rlwe(_) => Backend::RlweToy,
        }
    }

    pub fn key_set(&self) -> &[PartyId] {
        &self.key_set
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn plain_len(&self) -> usize {
        self.plain_len
    }

    pub fn ring_dim(&self) -> usize {
        self.ring_dim
    }

    /// Conservative `log2` bound on the decryption phase; `0` for the
    /// transparent backend.
    pub fn noise_log2(&self) -> f64 {
        self.noise_log2
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::Ciphertext);
        h.update(&self.to_bytes());
        h.finish()
    }

    /// Number of key monomials carried (1 for transparent ciphertexts).
    pub fn num_components(&self) -> usize {
        match &self.payload {
            Payload::Transparent { .. } => 1,
            Payload::Rlwe(map) => map.len(),
        }
    }
}

fn check_budget(ct: MultiKeyCiphertext) -> Result<MultiKeyCiphertext, MkheError> {
    if let Payload::Rlwe(_) = ct.payload {
        let q_log2 = RnsContext::get(ct.ring_dim).q_log2();
        if ct.noise_log2 + EVAL_HEADROOM_BITS >= q_log2 - 1.0 {
            return Err(MkheError::NoiseBudgetExceeded { bits: ct.noise_log2 });
        }
    }
    Ok(ct)
}

fn log2_sum(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (1.0 + (lo - hi).exp2()).log2()
}

fn tag_of(op: u8, tags: &[&Digest32]) -> Digest32 {
    let mut h = Hasher::new(Domain::Ciphertext);
    h.update(&[op]);
    for t in tags {
        h.update(t.as_bytes());
    }
    h.finish()
}

pub fn encrypt<R: RngCore + ?Sized>(
    pk: &PublicKey,
    m: &[RingElement],
    rng: &mut R,
) -> Result<MultiKeyCiphertext, MkheError> {
    if m.is_empty() {
        return Err(MkheError::ParamMismatch { what: "plaintext length", expected: 1, got: 0 });
    }
    if let Some(bad) = m.iter().find(|x| x.dim() != pk.ring_dim) {
        return Err(MkheError::ParamMismatch { what: "ring dimension", expected: pk.ring_dim, got: bad.dim() });
    }
    let (payload, noise_log2) = match &pk.material {
        PkMaterial::Transparent(_) => {
            let mut tag = [0u8; 32];
            rng.fill_bytes(&mut tag);
            (Payload::Transparent { plain: m.to_vec(), tag: Digest32(tag) }, 0.0)
        }
        PkMaterial::Rlwe(key) => {
            let ctx = RnsContext::get(pk.ring_dim);
            let (c0, c1): (Vec<_>, Vec<_>) = m.iter().map(|mi| rlwe::encrypt_one(&ctx, key, mi, rng)).unzip();
            let map = BTreeMap::from([(Monomial::One, c0), (Monomial::Linear(pk.party_id), c1)]);
            (Payload::Rlwe(map), rlwe::fresh_noise_log2(pk.ring_dim))
        }
    };
    Ok(MultiKeyCiphertext { key_set: vec![pk.party_id], level: 0, plain_len: m.len(), ring_dim: pk.ring_dim, noise_log2, payload })
}

/// Encrypts a field vector under the constant-coefficient embedding.
pub fn encrypt_field<R: RngCore + ?Sized>(
    pk: &PublicKey,
    m: &[Fp],
    rng: &mut R,
) -> Result<MultiKeyCiphertext, MkheError> {
    encrypt(pk, &embed_vec(m, pk.ring_dim), rng)
}

fn check_pair(a: &MultiKeyCiphertext, b: &MultiKeyCiphertext) -> Result<(), MkheError> {
    if a.backend() != b.backend() {
        return Err(MkheError::BackendMismatch);
    }
    if a.ring_dim != b.ring_dim {
        return Err(MkheError::ParamMismatch { what: "ring dimension", expected: a.ring_dim, got: b.ring_dim });
    }
    Ok(())
}

fn union(a: &[PartyId], b: &[PartyId]) -> Vec<PartyId> {
    a.iter().chain(b).copied().collect::<BTreeSet<_>>().into_iter().collect()
}

/// `a ⊕ b`.
pub fn add(a: &MultiKeyCiphertext, b: &MultiKeyCiphertext) -> Result<MultiKeyCiphertext, MkheError> {
    check_pair(a, b)?;
    if a.plain_len != b.plain_len {
        return Err(MkheError::ParamMismatch { what: "plaintext length", expected: a.plain_len, got: b.plain_len });
    }
    let payload = match (&a.payload, &b.payload) {
        (Payload::Transparent { plain: pa, tag: ta }, Payload::Transparent { plain: pb, tag: tb }) => Payload::Transparent {
            plain: pa.iter().zip(pb).map(|(x, y)| x + y).collect(),
            tag: tag_of(b'+', &[ta, tb]),
        },
        (Payload::Rlwe(ma), Payload::Rlwe(mb)) => {
            let ctx = RnsContext::get(a.ring_dim);
            let mut out = ma.clone();
            for (mon, polys) in mb {
                match out.get_mut(mon) {
                    Some(dst) => dst.iter_mut().zip(polys).for_each(|(d, p)| ctx.add_assign(d, p)),
                    None => {
                        out.insert(*mon, polys.clone());
                    }
                }
            }
            Payload::Rlwe(out)
        }
        _ => return Err(MkheError::BackendMismatch),
    };
    check_budget(MultiKeyCiphertext {
        key_set: union(&a.key_set, &b.key_set),
        level: a.level.max(b.level),
        plain_len: a.plain_len,
        ring_dim: a.ring_dim,
        noise_log2: if a.backend() == Backend::Transparent { 0.0 } else { log2_sum(a.noise_log2, b.noise_log2) },
        payload,
    })
}

/// `s ⊙ c`. The scalar is lifted to its centered representative.
pub fn scalar_mul(s: Fp, c: &MultiKeyCiphertext) -> Result<MultiKeyCiphertext, MkheError> {
    let (payload, noise) = match &c.payload {
        Payload::Transparent { plain, tag } => (
            Payload::Transparent { plain: plain.iter().map(|x| x.scale(s)).collect(), tag: tag_of(b'*', &[tag, &Digest32(pad32(s))]) },
            0.0,
        ),
        Payload::Rlwe(map) => {
            let ctx = RnsContext::get(c.ring_dim);
            let lift = ctx.scalar(s);
            let out = map.iter().map(|(m, v)| (*m, v.iter().map(|p| ctx.mul_scalar(p, &lift)).collect())).collect();
            let mag = (s.centered().unsigned_abs() as f64).max(1.0);
            (Payload::Rlwe(out), c.noise_log2 + mag.log2())
        }
    };
    check_budget(MultiKeyCiphertext { noise_log2: noise, payload, ..c.clone_header() })
}

fn pad32(s: Fp) -> [u8; 32] {
    let mut out = [0u8; 32];
    out[..8].copy_from_slice(&s.to_le_bytes());
    out
}

impl MultiKeyCiphertext {
    fn clone_header(&self) -> MultiKeyCiphertext {
        MultiKeyCiphertext {
            key_set: self.key_set.clone(),
            level: self.level,
            plain_len: self.plain_len,
            ring_dim: self.ring_dim,
            noise_log2: self.noise_log2,
            payload: Payload::Rlwe(BTreeMap::new()),
        }
    }
}

/// Dense matrix over `R_t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RingMatrix {
    cols: usize,
    rows: Vec<Vec<RingElement>>,
}

impl RingMatrix {
    pub fn new(rows: Vec<Vec<RingElement>>) -> Result<Self, MkheError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || cols == 0 {
            return Err(MkheError::InvalidParams("empty ring matrix".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(MkheError::ParamMismatch { what: "ring matrix row length", expected: cols, got: bad.len() });
        }
        Ok(Self { cols, rows })
    }

    /// The `G` block of a commitment key.
    pub fn commit_g(params: &CommitParams) -> Self {
        Self { cols: params.l(), rows: params.g().to_vec() }
    }

    /// The first `cols` columns of the `H` block of a commitment key.
    pub fn commit_h(params: &CommitParams, cols: usize) -> Self {
        let cols = cols.min(params.m());
        Self { cols, rows: params.h().iter().map(|r| r[..cols].to_vec()).collect() }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> &[Vec<RingElement>] {
        &self.rows
    }
}

/// Public matrices accepted by [`matrix_mul`].
#[derive(Clone, Debug)]
pub enum PlainMatrix {
    /// Field entries acting through the constant embedding.
    Field(SparseMatrix),
    Ring(RingMatrix),
}

impl PlainMatrix {
    pub fn num_rows(&self) -> usize {
        match self {
            PlainMatrix::Field(m) => m.num_rows(),
            PlainMatrix::Ring(m) => m.num_rows(),
        }
    }

    pub fn num_cols(&self) -> usize {
        match self {
            PlainMatrix::Field(m) => m.num_cols(),
            PlainMatrix::Ring(m) => m.num_cols(),
        }
    }

    /// Plaintext product, used as the reference for [`matrix_mul`].
    pub fn apply(&self, v: &[RingElement]) -> Result<Vec<RingElement>, MkheError> {
        if v.len() != self.num_cols() {
            return Err(MkheError::ParamMismatch { what: "matrix columns", expected: self.num_cols(), got: v.len() });
        }
        let n = v.first().map_or(0, |x| x.dim());
        Ok(match self {
            PlainMatrix::Field(m) => m
                .rows()
                .iter()
                .map(|row| {
                    let mut acc = RingElement::zero(n);
                    for (c, coeff) in row {
                        acc.add_scaled_assign(*coeff, &v[*c]);
                    }
                    acc
                })
                .collect(),
            PlainMatrix::Ring(m) => m
                .rows
                .iter()
                .map(|row| {
                    let mut acc = RingElement::zero(n);
                    for (h, x) in row.iter().zip(v) {
                        if x.is_constant() {
                            acc.add_scaled_assign(x.constant_term(), h);
                        } else {
                            acc.add_assign(&(h * x));
                        }
                    }
                    acc
                })
                .collect(),
        })
    }
}

/// `M · c`.
pub fn matrix_mul(m: &PlainMatrix, c: &MultiKeyCiphertext) -> Result<MultiKeyCiphertext, MkheError> {
    if m.num_cols() != c.plain_len {
        return Err(MkheError::ParamMismatch { what: "matrix columns", expected: m.num_cols(), got: c.plain_len });
    }
    if let PlainMatrix::Ring(r) = m {
        if let Some(bad) = r.rows.iter().flatten().find(|x| x.dim() != c.ring_dim) {
            return Err(MkheError::ParamMismatch { what: "ring dimension", expected: c.ring_dim, got: bad.dim() });
        }
    }
    let (payload, noise) = match &c.payload {
        Payload::Transparent { plain, tag } => {
            (Payload::Transparent { plain: m.apply(plain)?, tag: tag_of(b'M', &[tag]) }, 0.0)
        }
        Payload::Rlwe(map) => {
            let ctx = RnsContext::get(c.ring_dim);
            let out = match m {
                PlainMatrix::Field(sm) => {
                    let lifted: Vec<Vec<(usize, Vec<u64>)>> =
                        sm.rows().iter().map(|row| row.iter().map(|(j, v)| (*j, ctx.scalar(*v))).collect()).collect();
                    map.iter()
                        .map(|(mon, polys)| {
                            let rows = lifted
                                .iter()
                                .map(|row| {
                                    let mut acc = ctx.zero();
                                    for (j, s) in row {
                                        ctx.add_scaled_assign(&mut acc, &polys[*j], s);
                                    }
                                    acc
                                })
                                .collect();
                            (*mon, rows)
                        })
                        .collect()
                }
                PlainMatrix::Ring(rm) => {
                    let lifted: Vec<Vec<RnsPoly>> =
                        rm.rows.iter().map(|row| row.iter().map(|h| ctx.from_ring(h)).collect()).collect();
                    map.iter()
                        .map(|(mon, polys)| {
                            let rows = lifted
                                .iter()
                                .map(|row| {
                                    let mut acc = ctx.zero();
                                    for (h, p) in row.iter().zip(polys) {
                                        ctx.add_mul_assign(&mut acc, h, p);
                                    }
                                    acc
                                })
                                .collect();
                            (*mon, rows)
                        })
                        .collect()
                }
            };
            let growth = match m {
                PlainMatrix::Field(sm) => sm.max_row_l1_log2(),
                PlainMatrix::Ring(rm) => (rm.cols as f64 * c.ring_dim as f64 * (MODULUS / 2) as f64).log2(),
            };
            (Payload::Rlwe(out), c.noise_log2 + growth)
        }
    };
    check_budget(MultiKeyCiphertext { plain_len: m.num_rows(), noise_log2: noise, payload, ..c.clone_header() })
}

/// Entry-wise product `a ⊗ b`. A length-1 operand is broadcast.
pub fn ct_mul(a: &MultiKeyCiphertext, b: &MultiKeyCiphertext) -> Result<MultiKeyCiphertext, MkheError> {
    check_pair(a, b)?;
    if a.level > 0 || b.level > 0 {
        return Err(MkheError::DepthExceeded);
    }
    let len = match (a.plain_len, b.plain_len) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        (x, y) => return Err(MkheError::ParamMismatch { what: "plaintext length", expected: x, got: y }),
    };
    let ia = |k: usize| if a.plain_len == 1 { 0 } else { k };
    let ib = |k: usize| if b.plain_len == 1 { 0 } else { k };
    let (payload, noise) = match (&a.payload, &b.payload) {
        (Payload::Transparent { plain: pa, tag: ta }, Payload::Transparent { plain: pb, tag: tb }) => (
            Payload::Transparent {
                plain: (0..len).map(|k| &pa[ia(k)] * &pb[ib(k)]).collect(),
                tag: tag_of(b'x', &[ta, tb]),
            },
            0.0,
        ),
        (Payload::Rlwe(ma), Payload::Rlwe(mb)) => {
            let ctx = RnsContext::get(a.ring_dim);
            let mut out: BTreeMap<Monomial, Vec<RnsPoly>> = BTreeMap::new();
            for (mon_a, va) in ma {
                for (mon_b, vb) in mb {
                    let mon = mon_a.times(*mon_b)?;
                    let dst = out.entry(mon).or_insert_with(|| vec![ctx.zero(); len]);
                    for (k, d) in dst.iter_mut().enumerate() {
                        ctx.add_mul_assign(d, &va[ia(k)], &vb[ib(k)]);
                    }
                }
            }
            (Payload::Rlwe(out), (a.ring_dim as f64).log2() + a.noise_log2 + b.noise_log2)
        }
        _ => return Err(MkheError::BackendMismatch),
    };
    check_budget(MultiKeyCiphertext {
        key_set: union(&a.key_set, &b.key_set),
        level: 1,
        plain_len: len,
        ring_dim: a.ring_dim,
        noise_log2: noise,
        payload,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalOp {
    Add,
    ScalarMul,
    MatrixMul,
    CtMul,
}

pub enum Operand<'a> {
    Ct(&'a MultiKeyCiphertext),
    Scalar(Fp),
    Matrix(&'a PlainMatrix),
}

/// Operator dispatch; `rhs` must match the operator's operand kind.
pub fn eval(op: EvalOp, lhs: &MultiKeyCiphertext, rhs: Operand<'_>) -> Result<MultiKeyCiphertext, MkheError> {
    match (op, rhs) {
        (EvalOp::Add, Operand::Ct(c)) => add(lhs, c),
        (EvalOp::ScalarMul, Operand::Scalar(s)) => scalar_mul(s, lhs),
        (EvalOp::MatrixMul, Operand::Matrix(m)) => matrix_mul(m, lhs),
        (EvalOp::CtMul, Operand::Ct(c)) => ct_mul(lhs, c),
        (op, _) => Err(MkheError::InvalidParams(format!("operand kind does not fit {op:?}"))),
    }
}

/// First-round material for the quadratic monomial `s_from·s_to`.
#[derive(Clone, PartialEq, Eq)]
pub struct RelayShare {
    pub from: PartyId,
    pub to: PartyId,
    pub ct_digest: Digest32,
    polys: Vec<RnsPoly>,
}

impl fmt::Debug for RelayShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RelayShare {{ from: {}, to: {}, ct: {} }}", self.from, self.to, self.ct_digest.to_hex())
    }
}

#[derive(Clone, PartialEq, Eq)]
enum SharePayload {
    Transparent(Digest32),
    Rlwe(Vec<RnsPoly>),
}

#[derive(Clone, PartialEq, Eq)]
pub struct DecryptionShare {
    pub party_id: PartyId,
    pub ct_digest: Digest32,
    payload: SharePayload,
}

impl fmt::Debug for DecryptionShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DecryptionShare {{ party_id: {}, ct: {} }}", self.party_id, self.ct_digest.to_hex())
    }
}

fn transparent_token(party: PartyId, ct_digest: &Digest32) -> Digest32 {
    let mut h = Hasher::new(Domain::Share);
    h.update(&party.to_le_bytes()).update(ct_digest.as_bytes());
    h.finish()
}

fn smudge_bits(ct: &MultiKeyCiphertext) -> u32 {
    let over = (ct.noise_log2 - (MODULUS as f64).log2()).ceil().max(0.0);
    over as u32 + SMUDGE_EXTRA_BITS
}

fn require_member(kp: &MkheKeyPair, ct: &MultiKeyCiphertext) -> Result<(), MkheError> {
    if kp.pk.backend() != ct.backend() {
        return Err(MkheError::BackendMismatch);
    }
    if kp.pk.ring_dim != ct.ring_dim {
        return Err(MkheError::ParamMismatch { what: "ring dimension", expected: ct.ring_dim, got: kp.pk.ring_dim });
    }
    if ct.key_set.binary_search(&kp.party_id()).is_err() {
        return Err(MkheError::NotAParticipant(kp.party_id()));
    }
    Ok(())
}

/// Round one: relays from `kp` for every `s_i·s_j` with `i = kp`, `j > i`.
pub fn relay_shares<R: RngCore + ?Sized>(
    kp: &MkheKeyPair,
    ct: &MultiKeyCiphertext,
    rng: &mut R,
) -> Result<Vec<RelayShare>, MkheError> {
    require_member(kp, ct)?;
    let (Payload::Rlwe(map), SkMaterial::Rlwe(sk)) = (&ct.payload, &kp.sk) else {
        return Ok(Vec::new());
    };
    let ctx = RnsContext::get(ct.ring_dim);
    let me = kp.party_id();
    let digest = ct.digest();
    let bits = smudge_bits(ct);
    Ok(map
        .iter()
        .filter_map(|(mon, polys)| match mon {
            Monomial::Quad(i, j) if *i == me && *j != me => Some((*j, polys)),
            _ => None,
        })
        .map(|(to, polys)| RelayShare {
            from: me,
            to,
            ct_digest: digest,
            polys: polys.iter().map(|c| ctx.add(&ctx.mul(c, &sk.s), &rlwe::smudge(&ctx, bits, rng))).collect(),
        })
        .collect())
}

/// Round two: the smudged partial decryption of `kp`. `relays` must contain
/// every relay addressed to `kp` for this ciphertext.
pub fn partial_decrypt<R: RngCore + ?Sized>(
    kp: &MkheKeyPair,
    ct: &MultiKeyCiphertext,
    relays: &[RelayShare],
    rng: &mut R,
) -> Result<DecryptionShare, MkheError> {
    require_member(kp, ct)?;
    let me = kp.party_id();
    let ct_digest = ct.digest();
    let payload = match (&ct.payload, &kp.sk) {
        (Payload::Transparent { .. }, _) => SharePayload::Transparent(transparent_token(me, &ct_digest)),
        (Payload::Rlwe(map), SkMaterial::Rlwe(sk)) => {
            let ctx = RnsContext::get(ct.ring_dim);
            let mut inbound: BTreeMap<PartyId, &RelayShare> = BTreeMap::new();
            for r in relays.iter().filter(|r| r.to == me) {
                if r.ct_digest != ct_digest || r.polys.len() != ct.plain_len {
                    return Err(MkheError::ShareBindingError { party: r.from });
                }
                inbound.entry(r.from).or_insert(r);
            }
            let missing: Vec<PartyId> = map
                .keys()
                .filter_map(|m| match m {
                    Monomial::Quad(i, j) if *j == me && *i != me && !inbound.contains_key(i) => Some(*i),
                    _ => None,
                })
                .collect();
            if !missing.is_empty() {
                return Err(MkheError::IncompleteShares { missing });
            }
            let bits = smudge_bits(ct);
            let share = (0..ct.plain_len)
                .map(|k| {
                    let mut acc = rlwe::smudge(&ctx, bits, rng);
                    for (mon, polys) in map {
                        match mon {
                            Monomial::Linear(i) if *i == me => ctx.add_mul_assign(&mut acc, &polys[k], &sk.s),
                            Monomial::Quad(i, j) if *i == me && *j == me => ctx.add_mul_assign(&mut acc, &polys[k], &sk.s2),
                            Monomial::Quad(i, j) if *j == me => ctx.add_mul_assign(&mut acc, &inbound[i].polys[k], &sk.s),
                            _ => {}
                        }
                    }
                    acc
                })
                .collect();
            SharePayload::Rlwe(share)
        }
        _ => return Err(MkheError::BackendMismatch),
    };
    Ok(DecryptionShare { party_id: me, ct_digest, payload })
}

/// Sums the shares onto the constant component. Duplicate shares from one
/// party are collapsed; shares must cover exactly the key set.
pub fn combine(shares: &[DecryptionShare], ct: &MultiKeyCiphertext) -> Result<Vec<RingElement>, MkheError> {
    let digest = ct.digest();
    let mut by_party: BTreeMap<PartyId, &DecryptionShare> = BTreeMap::new();
    for s in shares {
        if s.ct_digest != digest || ct.key_set.binary_search(&s.party_id).is_err() {
            return Err(MkheError::ShareBindingError { party: s.party_id });
        }
        by_party.entry(s.party_id).or_insert(s);
    }
    let missing: Vec<PartyId> = ct.key_set.iter().copied().filter(|p| !by_party.contains_key(p)).collect();
    if !missing.is_empty() {
        return Err(MkheError::IncompleteShares { missing });
    }
    match &ct.payload {
        Payload::Transparent { plain, .. } => {
            for (p, s) in &by_party {
                if s.payload != SharePayload::Transparent(transparent_token(*p, &digest)) {
                    return Err(MkheError::ShareBindingError { party: *p });
                }
            }
            Ok(plain.clone())
        }
        Payload::Rlwe(map) => {
            let ctx = RnsContext::get(ct.ring_dim);
            let k = ct.key_set.len() as f64;
            let smudge_total = (MODULUS as f64).log2()
                + smudge_bits(ct) as f64
                + (k + k * (k - 1.0) / 2.0 * ct.ring_dim as f64).log2();
            let total = log2_sum(ct.noise_log2, smudge_total);
            if total >= ctx.q_log2() - 1.0 {
                return Err(MkheError::NoiseBudgetExceeded { bits: total });
            }
            let mut acc: Vec<RnsPoly> = map.get(&Monomial::One).cloned().unwrap_or_else(|| vec![ctx.zero(); ct.plain_len]);
            for s in by_party.values() {
                let SharePayload::Rlwe(polys) = &s.payload else {
                    return Err(MkheError::ShareBindingError { party: s.party_id });
                };
                if polys.len() != ct.plain_len {
                    return Err(MkheError::ShareBindingError { party: s.party_id });
                }
                acc.iter_mut().zip(polys).for_each(|(a, p)| ctx.add_assign(a, p));
            }
            Ok(acc.iter().map(|p| ctx.decode_mod_p(p)).collect())
        }
    }
}

/// Both decryption rounds with every key held locally.
pub fn joint_decrypt<R: RngCore + ?Sized>(
    keys: &[&MkheKeyPair],
    ct: &MultiKeyCiphertext,
    rng: &mut R,
) -> Result<Vec<RingElement>, MkheError> {
    let involved: Vec<&&MkheKeyPair> = keys.iter().filter(|k| ct.key_set.binary_search(&k.party_id()).is_ok()).collect();
    let mut relays = Vec::new();
    for kp in &involved {
        relays.extend(relay_shares(kp, ct, rng)?);
    }
    let shares = involved.iter().map(|kp| partial_decrypt(kp, ct, &relays, rng)).collect::<Result<Vec<_>, _>>()?;
    combine(&shares, ct)
}

/// Constant terms of [`joint_decrypt`], for field-vector plaintexts.
pub fn joint_decrypt_field<R: RngCore + ?Sized>(
    keys: &[&MkheKeyPair],
    ct: &MultiKeyCiphertext,
    rng: &mut R,
) -> Result<Vec<Fp>, MkheError> {
    Ok(joint_decrypt(keys, ct, rng)?.iter().map(|r| r.constant_term()).collect())
}

impl Encode for RnsPoly {
    fn encode_to(&self, out: &mut Vec<u8>) {
        for limb in &self.limbs {
            for x in limb {
                put_u64(out, *x);
            }
        }
    }
}

fn decode_poly(ctx: &RnsContext, r: &mut Reader<'_>) -> Result<RnsPoly, DecodeError> {
    let mut limbs = Vec::with_capacity(ctx.moduli().len());
    for q in ctx.moduli() {
        let mut limb = Vec::with_capacity(ctx.n);
        for _ in 0..ctx.n {
            let x = r.u64()?;
            if x >= q {
                return Err(DecodeError::Invalid("residue out of range"));
            }
            limb.push(x);
        }
        limbs.push(limb);
    }
    Ok(RnsPoly { limbs })
}

fn decode_ring_dim(r: &mut Reader<'_>) -> Result<usize, DecodeError> {
    let n = r.u32()? as usize;
    if n < 2 || !n.is_power_of_two() || n > MAX_RING_DIM {
        return Err(DecodeError::Invalid("ring dimension"));
    }
    Ok(n)
}

impl Encode for MultiKeyCiphertext {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(FORMAT_VERSION);
        out.push(self.backend().id());
        put_u32(out, self.ring_dim as u32);
        put_u64(out, self.plain_len as u64);
        out.push(self.level);
        put_u64(out, self.noise_log2.to_bits());
        put_u64(out, self.key_set.len() as u64);
        for p in &self.key_set {
            put_u32(out, *p);
        }
        match &self.payload {
            Payload::Transparent { plain, tag } => {
                for x in plain {
                    x.encode_to(out);
                }
                tag.encode_to(out);
            }
            Payload::Rlwe(map) => {
                put_u64(out, map.len() as u64);
                for (mon, polys) in map {
                    mon.encode_to(out);
                    for p in polys {
                        p.encode_to(out);
                    }
                }
            }
        }
    }
}

impl Decode for MultiKeyCiphertext {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.version()?;
        let backend = Backend::from_id(r.u8()?)?;
        let ring_dim = decode_ring_dim(r)?;
        let plain_len = r.len_prefix(8)?;
        let level = r.u8()?;
        if level > 1 {
            return Err(DecodeError::Invalid("level"));
        }
        let noise_log2 = f64::from_bits(r.u64()?);
        if !noise_log2.is_finite() || noise_log2 < 0.0 {
            return Err(DecodeError::Invalid("noise bound"));
        }
        let nk = r.len_prefix(4)?;
        let key_set = (0..nk).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if key_set.is_empty() || key_set.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DecodeError::Invalid("key set must be nonempty and strictly sorted"));
        }
        let payload = match backend {
            Backend::Transparent => {
                let plain = (0..plain_len).map(|_| RingElement::decode_from(r)).collect::<Result<Vec<_>, _>>()?;
                if plain.iter().any(|x| x.dim() != ring_dim) {
                    return Err(DecodeError::Invalid("ring dimension"));
                }
                Payload::Transparent { plain, tag: Digest32::decode_from(r)? }
            }
            Backend::RlweToy => {
                let ctx = RnsContext::get(ring_dim);
                let count = r.len_prefix(1)?;
                let mut map = BTreeMap::new();
                for _ in 0..count {
                    let mon = Monomial::decode_from(r)?;
                    let involved = match mon {
                        Monomial::One => vec![],
                        Monomial::Linear(i) => vec![i],
                        Monomial::Quad(i, j) => vec![i, j],
                    };
                    if mon.degree() > level + 1 || involved.iter().any(|p| key_set.binary_search(p).is_err()) {
                        return Err(DecodeError::Invalid("monomial outside key set or level"));
                    }
                    let polys = (0..plain_len).map(|_| decode_poly(&ctx, r)).collect::<Result<Vec<_>, _>>()?;
                    if map.insert(mon, polys).is_some() {
                        return Err(DecodeError::Invalid("duplicate monomial"));
                    }
                }
                if map.keys().copied().collect::<Vec<_>>().windows(2).any(|w| w[0] >= w[1]) {
                    return Err(DecodeError::Invalid("monomial order"));
                }
                Payload::Rlwe(map)
            }
        };
        Ok(Self { key_set, level, plain_len, ring_dim, noise_log2, payload })
    }
}

impl Encode for DecryptionShare {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(FORMAT_VERSION);
        put_u32(out, self.party_id);
        self.ct_digest.encode_to(out);
        match &self.payload {
            SharePayload::Transparent(token) => {
                out.push(Backend::Transparent.id());
                token.encode_to(out);
            }
            SharePayload::Rlwe(polys) => {
                out.push(Backend::RlweToy.id());
                put_u32(out, polys.first().map_or(0, |p| p.dim()) as u32);
                put_u64(out, polys.len() as u64);
                for p in polys {
                    p.encode_to(out);
                }
            }
        }
    }
}

impl Decode for DecryptionShare {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.version()?;
        let party_id = r.u32()?;
        let ct_digest = Digest32::decode_from(r)?;
        let payload = match Backend::from_id(r.u8()?)? {
            Backend::Transparent => SharePayload::Transparent(Digest32::decode_from(r)?),
            Backend::RlweToy => {
                let ctx = RnsContext::get(decode_ring_dim(r)?);
                let len = r.len_prefix(8)?;
                SharePayload::Rlwe((0..len).map(|_| decode_poly(&ctx, r)).collect::<Result<_, _>>()?)
            }
        };
        Ok(Self { party_id, ct_digest, payload })
    }
}

impl Encode for RelayShare {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(FORMAT_VERSION);
        put_u32(out, self.from);
        put_u32(out, self.to);
        self.ct_digest.encode_to(out);
        put_u32(out, self.polys.first().map_or(0, |p| p.dim()) as u32);
        put_seq(out, &self.polys);
    }
}

impl Decode for RelayShare {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.version()?;
        let (from, to) = (r.u32()?, r.u32()?);
        let ct_digest = Digest32::decode_from(r)?;
        let ctx = RnsContext::get(decode_ring_dim(r)?);
        let len = r.len_prefix(8)?;
        let polys = (0..len).map(|_| decode_poly(&ctx, r)).collect::<Result<_, _>>()?;
        Ok(Self { from, to, ct_digest, polys })
    }
}

#[cfg(test)]
mod tests;
