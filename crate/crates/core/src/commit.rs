//! Additively homomorphic linear commitment `Com(pp, M, r) = G·r + H·M` over
//! `R_t`, with `G`, `H` expanded from a public seed.

use serde::{Deserialize, Serialize};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake256;
use thiserror::Error;

use crate::algebra::{AlgebraError, Fp, RingElement, MODULUS};
use crate::encoding::{put_bytes, put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_L: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommitError {
    #[error("invalid commitment parameters: {0}")]
    InvalidParams(&'static str),
    #[error("{what} mismatch: {left} vs {right}")]
    ParamMismatch { what: &'static str, left: String, right: String },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

fn mismatch(what: &'static str, left: impl ToString, right: impl ToString) -> CommitError {
    CommitError::ParamMismatch { what, left: left.to_string(), right: right.to_string() }
}

/// Purpose tag of a commitment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    E,
    W,
    T,
}

impl Label {
    fn byte(self) -> u8 {
        match self {
            Label::E => b'E',
            Label::W => b'W',
            Label::T => b'T',
        }
    }

    /// Label whose matrices are expanded. `T` expands under `E`: the folded
    /// error commitment `Ē + v·T̄ + v²·Ē_i` only opens under a single key when
    /// the cross-term and error commitments share `(G, H)`.
    fn expansion(self) -> Label {
        match self {
            Label::T => Label::E,
            other => other,
        }
    }

    /// Whether a `rhs`-labelled commitment may be folded into a `self` one.
    fn folds_with(self, rhs: Label) -> bool {
        self == rhs || (self == Label::E && rhs == Label::T)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitParams {
    label: Label,
    seed: Vec<u8>,
    k: usize,
    l: usize,
    m: usize,
    n: usize,
    g: Vec<Vec<RingElement>>,
    h: Vec<Vec<RingElement>>,
    digest: Digest32,
}

/// One SHAKE256 stream per matrix entry; coefficients are rejection-sampled
/// from little-endian 64-bit words.
fn expand_entry(seed: &[u8], label: Label, matrix: u8, row: usize, col: usize, n: usize) -> RingElement {
    let mut xof = Shake256::default();
    let tag = b"admission/commit-matrix/v1";
    xof.update(&(tag.len() as u64).to_le_bytes());
    xof.update(tag);
    xof.update(&(seed.len() as u64).to_le_bytes());
    xof.update(seed);
    xof.update(&[label.byte(), matrix]);
    xof.update(&(row as u32).to_le_bytes());
    xof.update(&(col as u32).to_le_bytes());
    let mut reader = xof.finalize_xof();
    let mut coeffs = Vec::with_capacity(n);
    let mut word = [0u8; 8];
    while coeffs.len() < n {
        reader.read(&mut word);
        if let Some(c) = Fp::from_canonical(u64::from_le_bytes(word)) {
            coeffs.push(c);
        }
    }
    debug_assert!(coeffs.iter().all(|c| c.value() < MODULUS));
    RingElement::from_coeffs(coeffs).expect("dimension validated by caller")
}

pub fn gen_params(seed: &[u8], label: Label, k: usize, l: usize, m: usize, n: usize) -> Result<CommitParams, CommitError> {
    if seed.is_empty() {
        return Err(CommitError::InvalidParams("empty seed"));
    }
    if k == 0 || l == 0 || m == 0 {
        return Err(CommitError::InvalidParams("zero dimension"));
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(CommitError::InvalidParams("ring dimension must be a power of two"));
    }
    let exp = label.expansion();
    let g = (0..k).map(|i| (0..l).map(|j| expand_entry(seed, exp, b'G', i, j, n)).collect()).collect();
    let h = (0..k).map(|i| (0..m).map(|j| expand_entry(seed, exp, b'H', i, j, n)).collect()).collect();
    let mut hasher = Hasher::new(Domain::CommitParams);
    hasher.field(seed).field(&[label.byte(), exp.byte()]);
    for d in [k, l, m, n] {
        hasher.update(&(d as u64).to_le_bytes());
    }
    Ok(CommitParams { label, seed: seed.to_vec(), k, l, m, n, g, h, digest: hasher.finish() })
}

impl CommitParams {
    pub fn label(&self) -> Label {
        self.label
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn l(&self) -> usize {
        self.l
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn ring_dim(&self) -> usize {
        self.n
    }
    pub fn g(&self) -> &[Vec<RingElement>] {
        &self.g
    }
    pub fn h(&self) -> &[Vec<RingElement>] {
        &self.h
    }
    /// Binds seed, label, and dimensions; the matrices are a function of these.
    pub fn digest(&self) -> Digest32 {
        self.digest
    }

    pub fn zero_randomness(&self) -> Vec<RingElement> {
        vec![RingElement::zero(self.n); self.l]
    }

    pub fn random_randomness<R: rand::RngCore + ?Sized>(&self, rng: &mut R) -> Vec<RingElement> {
        (0..self.l).map(|_| RingElement::random(self.n, rng)).collect()
    }

    fn check_randomness(&self, r: &[RingElement]) -> Result<(), CommitError> {
        if r.len() != self.l {
            return Err(mismatch("randomness length", self.l, r.len()));
        }
        if let Some(bad) = r.iter().find(|x| x.dim() != self.n) {
            return Err(mismatch("ring dimension", self.n, bad.dim()));
        }
        Ok(())
    }

    fn g_times(&self, r: &[RingElement]) -> Vec<RingElement> {
        self.g
            .iter()
            .map(|row| {
                let mut acc = RingElement::zero(self.n);
                for (gij, rj) in row.iter().zip(r) {
                    if !rj.is_zero() {
                        acc.add_assign(&(gij * rj));
                    }
                }
                acc
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment {
    label: Label,
    value: Vec<RingElement>,
}

impl Commitment {
    pub fn zero(params: &CommitParams) -> Self {
        Self { label: params.label, value: vec![RingElement::zero(params.n); params.k] }
    }

    pub fn from_parts(label: Label, value: Vec<RingElement>) -> Self {
        Self { label, value }
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn value(&self) -> &[RingElement] {
        &self.value
    }

    pub fn is_zero(&self) -> bool {
        self.value.iter().all(RingElement::is_zero)
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::Commitment);
        h.encoded(self);
        h.finish()
    }
}

/// `G·r + H·M` for a message over `R_t`.
pub fn commit(params: &CommitParams, msg: &[RingElement], r: &[RingElement]) -> Result<Commitment, CommitError> {
    if msg.len() != params.m {
        return Err(mismatch("message length", params.m, msg.len()));
    }
    if let Some(bad) = msg.iter().find(|x| x.dim() != params.n) {
        return Err(mismatch("ring dimension", params.n, bad.dim()));
    }
    params.check_randomness(r)?;
    let mut value = params.g_times(r);
    for (acc, hrow) in value.iter_mut().zip(&params.h) {
        for (hij, mj) in hrow.iter().zip(msg) {
            if mj.is_zero() {
                continue;
            }
            if mj.is_constant() {
                acc.add_scaled_assign(mj.constant_term(), hij);
            } else {
                acc.add_assign(&(hij * mj));
            }
        }
    }
    Ok(Commitment { label: params.label, value })
}

/// Commitment to a field vector under the constant-coefficient embedding.
pub fn commit_field(params: &CommitParams, msg: &[Fp], r: &[RingElement]) -> Result<Commitment, CommitError> {
    if msg.len() != params.m {
        return Err(mismatch("message length", params.m, msg.len()));
    }
    params.check_randomness(r)?;
    let mut value = params.g_times(r);
    for (acc, hrow) in value.iter_mut().zip(&params.h) {
        for (hij, mj) in hrow.iter().zip(msg) {
            if !mj.is_zero() {
                acc.add_scaled_assign(*mj, hij);
            }
        }
    }
    Ok(Commitment { label: params.label, value })
}

/// `c1 + v^power · c2`. The result carries `c1`'s label.
pub fn fold_commitments(c1: &Commitment, c2: &Commitment, v: Fp, power: u32) -> Result<Commitment, CommitError> {
    if !(1..=2).contains(&power) {
        return Err(CommitError::InvalidParams("fold power must be 1 or 2"));
    }
    if !c1.label.folds_with(c2.label) {
        return Err(mismatch("commitment label", format!("{:?}", c1.label), format!("{:?}", c2.label)));
    }
    if c1.value.len() != c2.value.len() {
        return Err(mismatch("commitment length", c1.value.len(), c2.value.len()));
    }
    let s = v.pow(power as u64);
    let mut value = c1.value.clone();
    for (a, b) in value.iter_mut().zip(&c2.value) {
        if a.dim() != b.dim() {
            return Err(mismatch("ring dimension", a.dim(), b.dim()));
        }
        a.add_scaled_assign(s, b);
    }
    Ok(Commitment { label: c1.label, value })
}

impl Encode for Label {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(self.byte());
    }
}

impl Decode for Label {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            b'E' => Ok(Label::E),
            b'W' => Ok(Label::W),
            b'T' => Ok(Label::T),
            _ => Err(DecodeError::Invalid("commitment label")),
        }
    }
}

impl Encode for Commitment {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.label.encode_to(out);
        put_u64(out, self.value.len() as u64);
        for v in &self.value {
            v.encode_to(out);
        }
    }
}

impl Decode for Commitment {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let label = Label::decode_from(r)?;
        let value = crate::encoding::get_seq(r, 16)?;
        Ok(Self { label, value })
    }
}

impl Encode for CommitParams {
    /// Public description only; matrices are re-expanded on load.
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.label.encode_to(out);
        put_bytes(out, &self.seed);
        for d in [self.k, self.l, self.m, self.n] {
            put_u64(out, d as u64);
        }
    }
}
