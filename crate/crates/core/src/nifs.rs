//! Plaintext non-interactive folding of committed relaxed R1CS instances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{axpy, Fp, RingElement};
use crate::commit::{fold_commitments, CommitError, Commitment};
use crate::encoding::{put_bytes, put_u32, put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader};
use crate::mlsags::PublicKey;
use crate::relation::{
    check_c1_report, commit_cross_term, CommitKeys, CommittedRelaxedInstance, CommittedRelaxedWitness, R1CSShape,
    RelationError,
};

pub const PROTOCOL_ID: &str = "admission/batch-fold";
pub const CTX_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NifsError {
    #[error("{what} mismatch: expected {expected}, got {got}")]
    ParamMismatch { what: &'static str, expected: usize, got: usize },
    #[error("fold input fails the committed relaxed R1CS check: {0}")]
    NotSatisfied(String),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Commit(#[from] CommitError),
}

/// Verifying-key digest: the shape and every commitment key.
pub fn verifying_key_digest(shape: &R1CSShape, keys: &CommitKeys) -> Digest32 {
    let mut h = Hasher::new(Domain::VerifyingKey);
    h.encoded(&shape.digest()).encoded(&keys.e.digest()).encoded(&keys.w.digest()).encoded(&keys.t.digest());
    h.finish()
}

/// Digest of `(vk, X)` for the ordered batch input list.
pub fn input_digest(vk: &Digest32, inputs: &[(Fp, PublicKey)]) -> Digest32 {
    let mut h = Hasher::new(Domain::InputList);
    h.encoded(vk).update(&(inputs.len() as u64).to_le_bytes());
    for (hash_phc, pk) in inputs {
        h.encoded(hash_phc).encoded(pk);
    }
    h.finish()
}

/// Fiat-Shamir context: `version ‖ protocol-id ‖ chain-id ‖ batch-id ‖ digest(vk, X)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FoldContext {
    pub version: u32,
    pub protocol_id: String,
    pub chain_id: u64,
    pub batch_id: u64,
    pub input_digest: Digest32,
}

impl FoldContext {
    pub fn new(chain_id: u64, batch_id: u64, input_digest: Digest32) -> Self {
        Self { version: CTX_VERSION, protocol_id: PROTOCOL_ID.to_string(), chain_id, batch_id, input_digest }
    }
}

impl Encode for FoldContext {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u32(out, self.version);
        put_bytes(out, self.protocol_id.as_bytes());
        put_u64(out, self.chain_id);
        put_u64(out, self.batch_id);
        self.input_digest.encode_to(out);
    }
}

impl Decode for FoldContext {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let version = r.u32()?;
        let protocol_id = String::from_utf8(r.bytes()?).map_err(|_| DecodeError::Invalid("protocol id"))?;
        Ok(Self { version, protocol_id, chain_id: r.u64()?, batch_id: r.u64()?, input_digest: Digest32::decode_from(r)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldChallenge {
    pub v: Fp,
    pub transcript_digest: Digest32,
}

/// `v = H(ctx, Ē_acc, W̄_acc, Ē_i, W̄_i, T̄, i)`, the 256-bit digest reduced
/// mod `p`.
pub fn derive_challenge(
    ctx: &FoldContext,
    e_acc: &Commitment,
    w_acc: &Commitment,
    e_i: &Commitment,
    w_i: &Commitment,
    t_bar: &Commitment,
    step: u64,
) -> FoldChallenge {
    let mut h = Hasher::new(Domain::Challenge);
    h.encoded(ctx).encoded(e_acc).encoded(w_acc).encoded(e_i).encoded(w_i).encoded(t_bar);
    h.update(&step.to_le_bytes());
    let d = h.finish();
    FoldChallenge { v: Fp::from_le_bytes_wide(d.as_bytes()), transcript_digest: d }
}

/// `T = AZ₁∘BZ₂ + AZ₂∘BZ₁ − u₁·CZ₂ − u₂·CZ₁`.
pub fn compute_cross_term(
    shape: &R1CSShape,
    (x1, u1, w1): (&[Fp], Fp, &[Fp]),
    (x2, u2, w2): (&[Fp], Fp, &[Fp]),
) -> Result<Vec<Fp>, NifsError> {
    let (a1, b1, c1) = shape.products(&shape.z(x1, u1, w1)?)?;
    let (a2, b2, c2) = shape.products(&shape.z(x2, u2, w2)?)?;
    Ok((0..shape.num_constraints()).map(|k| a1[k] * b2[k] + a2[k] * b1[k] - u1 * c2[k] - u2 * c1[k]).collect())
}

/// `T`, its commitment randomness, and `T̄ = Com(pp^T, T, r_T)`.
#[derive(Clone, PartialEq, Eq)]
pub struct CrossTerm {
    pub t: Vec<Fp>,
    pub r_t: Vec<RingElement>,
    pub t_bar: Commitment,
}

impl std::fmt::Debug for CrossTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CrossTerm {{ t_bar: {:?} }}", self.t_bar)
    }
}

#[derive(Clone, Debug)]
pub struct FoldOutput {
    pub instance: CommittedRelaxedInstance,
    pub witness: CommittedRelaxedWitness,
    pub cross_term: CrossTerm,
    pub challenge: FoldChallenge,
}

fn check_lengths(a: &[Fp], b: &[Fp], what: &'static str) -> Result<(), NifsError> {
    if a.len() != b.len() {
        return Err(NifsError::ParamMismatch { what, expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// Folded public instance from public data only.
pub fn nifs_verify(
    acc: &CommittedRelaxedInstance,
    new: &CommittedRelaxedInstance,
    t_bar: &Commitment,
    ctx: &FoldContext,
    step: u64,
) -> Result<CommittedRelaxedInstance, NifsError> {
    let ch = derive_challenge(ctx, &acc.e_bar, &acc.w_bar, &new.e_bar, &new.w_bar, t_bar, step);
    fold_instance(acc, new, t_bar, ch.v)
}

fn fold_instance(
    acc: &CommittedRelaxedInstance,
    new: &CommittedRelaxedInstance,
    t_bar: &Commitment,
    v: Fp,
) -> Result<CommittedRelaxedInstance, NifsError> {
    check_lengths(&acc.x, &new.x, "public input length")?;
    let e_bar = fold_commitments(&fold_commitments(&acc.e_bar, t_bar, v, 1)?, &new.e_bar, v, 2)?;
    Ok(CommittedRelaxedInstance {
        e_bar,
        u: acc.u + v * new.u,
        w_bar: fold_commitments(&acc.w_bar, &new.w_bar, v, 1)?,
        x: axpy(&acc.x, v, &new.x),
    })
}

fn fold_ring(a: &[RingElement], v: Fp, b: &[RingElement]) -> Vec<RingElement> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut out = x.clone();
            out.add_scaled_assign(v, y);
            out
        })
        .collect()
}

/// Folding prover with an input gate: both pairs must satisfy C1.
#[allow(clippy::too_many_arguments)]
pub fn fold_plain(
    shape: &R1CSShape,
    keys: &CommitKeys,
    acc: (&CommittedRelaxedInstance, &CommittedRelaxedWitness),
    new: (&CommittedRelaxedInstance, &CommittedRelaxedWitness),
    ctx: &FoldContext,
    step: u64,
    r_t: &[RingElement],
) -> Result<FoldOutput, NifsError> {
    for (inst, wit) in [acc, new] {
        let report = check_c1_report(shape, inst, wit, keys);
        if !report.holds() {
            return Err(NifsError::NotSatisfied(report.failure.unwrap_or_default()));
        }
    }
    fold_unchecked(shape, keys, acc, new, ctx, step, r_t)
}

/// The folding arithmetic without the input gate. The encrypted pipeline is
/// checked against this, including on deliberately bad inputs.
#[allow(clippy::too_many_arguments)]
pub fn fold_unchecked(
    shape: &R1CSShape,
    keys: &CommitKeys,
    (acc_i, acc_w): (&CommittedRelaxedInstance, &CommittedRelaxedWitness),
    (new_i, new_w): (&CommittedRelaxedInstance, &CommittedRelaxedWitness),
    ctx: &FoldContext,
    step: u64,
    r_t: &[RingElement],
) -> Result<FoldOutput, NifsError> {
    let t = compute_cross_term(shape, (&acc_i.x, acc_i.u, &acc_w.w), (&new_i.x, new_i.u, &new_w.w))?;
    let t_bar = commit_cross_term(keys, &t, r_t)?;
    let challenge = derive_challenge(ctx, &acc_i.e_bar, &acc_i.w_bar, &new_i.e_bar, &new_i.w_bar, &t_bar, step);
    let v = challenge.v;
    let v2 = v * v;
    let instance = fold_instance(acc_i, new_i, &t_bar, v)?;
    check_lengths(&acc_w.e, &new_w.e, "error length")?;
    check_lengths(&acc_w.w, &new_w.w, "witness length")?;
    let e: Vec<Fp> = (0..t.len()).map(|k| acc_w.e[k] + v * t[k] + v2 * new_w.e[k]).collect();
    let r_e = fold_ring(&fold_ring(&acc_w.r_e, v, r_t), v2, &new_w.r_e);
    let witness = CommittedRelaxedWitness {
        e,
        r_e,
        w: axpy(&acc_w.w, v, &new_w.w),
        r_w: fold_ring(&acc_w.r_w, v, &new_w.r_w),
    };
    Ok(FoldOutput { instance, witness, cross_term: CrossTerm { t, r_t: r_t.to_vec(), t_bar }, challenge })
}
