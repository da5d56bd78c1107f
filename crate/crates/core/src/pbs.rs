//! Batch finalization: the public padding fold, the settlement statement, a
//! pluggable settlement proof system, and submission assembly.
//!
//! The only secret-bearing input accepted here is a [`MaterializedBatch`];
//! no function takes an individual user's witness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Fp;
use crate::commit::Commitment;
use crate::encoding::{Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader, FORMAT_VERSION};
use crate::ledger::BatchSubmission;
use crate::mlsags::PublicKey;
use crate::nifs::{fold_plain, input_digest, nifs_verify, verifying_key_digest, FoldContext, NifsError};
use crate::pipeline::MaterializedBatch;
use crate::relation::{
    check_c1, CommitKeys, CommittedRelaxedInstance, CommittedRelaxedWitness, R1CSShape, ResCredential,
};

/// Default submission window, in blocks.
pub const DEFAULT_T_SUB_BLOCKS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PbsError {
    #[error("materialized batch is not satisfiable: {0}")]
    NotSatisfied(String),
    #[error("settlement proof refused: {0:?} violated")]
    ProofRefused(Clause),
    #[error("input list does not match the batch context")]
    CtxBindingError,
    #[error(transparent)]
    Nifs(NifsError),
}

impl From<NifsError> for PbsError {
    fn from(e: NifsError) -> Self {
        match e {
            NifsError::NotSatisfied(s) => PbsError::NotSatisfied(s),
            other => PbsError::Nifs(other),
        }
    }
}

/// The three settlement conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clause {
    FixedPadding,
    NifsConsistency,
    Satisfiability,
}

/// The public, all-zero padding pair: `x = 0, u = 0, W = 0, E = 0` with zero
/// commitment randomness. It satisfies the relaxed relation as `0 = 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddingPair {
    pub instance: CommittedRelaxedInstance,
    pub witness: CommittedRelaxedWitness,
}

impl PaddingPair {
    pub fn canonical(shape: &R1CSShape, keys: &CommitKeys) -> Self {
        Self {
            instance: CommittedRelaxedInstance {
                e_bar: Commitment::zero(&keys.e),
                u: Fp::ZERO,
                w_bar: Commitment::zero(&keys.w),
                x: vec![Fp::ZERO; shape.num_public()],
            },
            witness: CommittedRelaxedWitness {
                e: vec![Fp::ZERO; shape.num_constraints()],
                r_e: keys.e.zero_randomness(),
                w: vec![Fp::ZERO; shape.num_witness()],
                r_w: keys.w.zero_randomness(),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct PaddingFold {
    pub t: Vec<Fp>,
    pub t_bar: Commitment,
    pub instance: CommittedRelaxedInstance,
    pub witness: CommittedRelaxedWitness,
    pub step: u64,
}

/// Step `N+1`: folds the fixed pad into the materialized accumulator in the
/// clear. The pad's cross-term randomness is fixed at zero so `T̄_{N+1}` is
/// a public function of the batch.
pub fn padding_fold(
    shape: &R1CSShape,
    keys: &CommitKeys,
    batch: &MaterializedBatch,
    pad: &PaddingPair,
    ctx: &FoldContext,
) -> Result<PaddingFold, PbsError> {
    let step = batch.num_users + 1;
    let out = fold_plain(
        shape,
        keys,
        (&batch.instance, &batch.witness),
        (&pad.instance, &pad.witness),
        ctx,
        step,
        &keys.t.zero_randomness(),
    )?;
    Ok(PaddingFold {
        t: out.cross_term.t,
        t_bar: out.cross_term.t_bar,
        instance: out.instance,
        witness: out.witness,
        step,
    })
}

/// Public input of the settlement proof: `(𝓘_acc,N, T̄_{N+1}, 𝓘_acc,N+1)`
/// together with the batch context and the padding step index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementStatement {
    pub ctx: FoldContext,
    pub step: u64,
    pub acc_n: CommittedRelaxedInstance,
    pub t_bar: Commitment,
    pub acc_n1: CommittedRelaxedInstance,
}

impl SettlementStatement {
    pub fn new(ctx: &FoldContext, batch: &MaterializedBatch, fold: &PaddingFold) -> Self {
        Self {
            ctx: ctx.clone(),
            step: fold.step,
            acc_n: batch.instance.clone(),
            t_bar: fold.t_bar.clone(),
            acc_n1: fold.instance.clone(),
        }
    }

    pub fn x_digest(&self) -> Digest32 {
        self.ctx.input_digest
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::Statement);
        h.encoded(self);
        h.finish()
    }

    pub fn num_users(&self) -> u64 {
        self.step - 1
    }
}

impl Encode for SettlementStatement {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.ctx.encode_to(out);
        self.step.encode_to(out);
        self.acc_n.encode_to(out);
        self.t_bar.encode_to(out);
        self.acc_n1.encode_to(out);
    }
}

impl Decode for SettlementStatement {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            ctx: FoldContext::decode_from(r)?,
            step: r.u64()?,
            acc_n: CommittedRelaxedInstance::decode_from(r)?,
            t_bar: Commitment::decode_from(r)?,
            acc_n1: CommittedRelaxedInstance::decode_from(r)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProofBackend {
    /// Opening-revealing re-execution. Sound, not zero-knowledge.
    Transparent,
}

impl ProofBackend {
    pub fn id(self) -> u8 {
        match self {
            ProofBackend::Transparent => 1,
        }
    }

    fn from_id(id: u8) -> Option<Self> {
        (id == 1).then_some(ProofBackend::Transparent)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SettlementProof {
    pub backend: ProofBackend,
    pub payload: Vec<u8>,
}

impl Encode for SettlementProof {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(FORMAT_VERSION);
        out.push(self.backend.id());
        crate::encoding::put_bytes(out, &self.payload);
    }
}

impl Decode for SettlementProof {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        r.version()?;
        let backend = ProofBackend::from_id(r.u8()?).ok_or(DecodeError::Invalid("proof backend"))?;
        Ok(Self { backend, payload: r.bytes()? })
    }
}

/// Settlement proving and verification for one relation and key set.
pub trait ProofSystem {
    fn backend(&self) -> ProofBackend;

    /// Digest binding the relation and commitment keys; also the `vk` inside
    /// every batch context.
    fn verifying_key(&self) -> Digest32;

    fn prove(
        &self,
        statement: &SettlementStatement,
        pad: &CommittedRelaxedInstance,
        witness: &CommittedRelaxedWitness,
    ) -> Result<SettlementProof, PbsError>;

    fn verify(&self, statement: &SettlementStatement, proof: &SettlementProof) -> bool;
}

/// Proof = the statement digest, the pad instance and the folded witness
/// openings; verification re-executes every settlement check.
#[derive(Clone)]
pub struct TransparentProofSystem {
    shape: R1CSShape,
    keys: CommitKeys,
    pad: PaddingPair,
    vk: Digest32,
}

struct TransparentPayload {
    statement: Digest32,
    pad: CommittedRelaxedInstance,
    witness: CommittedRelaxedWitness,
}

impl Encode for TransparentPayload {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.statement.encode_to(out);
        self.pad.encode_to(out);
        self.witness.encode_to(out);
    }
}

impl Decode for TransparentPayload {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            statement: Digest32::decode_from(r)?,
            pad: CommittedRelaxedInstance::decode_from(r)?,
            witness: CommittedRelaxedWitness::decode_from(r)?,
        })
    }
}

impl TransparentProofSystem {
    pub fn new(shape: &R1CSShape, keys: &CommitKeys) -> Self {
        Self {
            pad: PaddingPair::canonical(shape, keys),
            vk: verifying_key_digest(shape, keys),
            shape: shape.clone(),
            keys: keys.clone(),
        }
    }

    pub fn pad(&self) -> &PaddingPair {
        &self.pad
    }

    fn first_violation(
        &self,
        statement: &SettlementStatement,
        pad: &CommittedRelaxedInstance,
        witness: &CommittedRelaxedWitness,
    ) -> Option<Clause> {
        if *pad != self.pad.instance {
            return Some(Clause::FixedPadding);
        }
        match nifs_verify(&statement.acc_n, pad, &statement.t_bar, &statement.ctx, statement.step) {
            Ok(folded) if folded == statement.acc_n1 => {}
            _ => return Some(Clause::NifsConsistency),
        }
        if !check_c1(&self.shape, &statement.acc_n1, witness, &self.keys) {
            return Some(Clause::Satisfiability);
        }
        None
    }
}

impl ProofSystem for TransparentProofSystem {
    fn backend(&self) -> ProofBackend {
        ProofBackend::Transparent
    }

    fn verifying_key(&self) -> Digest32 {
        self.vk
    }

    fn prove(
        &self,
        statement: &SettlementStatement,
        pad: &CommittedRelaxedInstance,
        witness: &CommittedRelaxedWitness,
    ) -> Result<SettlementProof, PbsError> {
        if let Some(clause) = self.first_violation(statement, pad, witness) {
            return Err(PbsError::ProofRefused(clause));
        }
        let payload = TransparentPayload { statement: statement.digest(), pad: pad.clone(), witness: witness.clone() };
        Ok(SettlementProof { backend: ProofBackend::Transparent, payload: payload.to_bytes() })
    }

    fn verify(&self, statement: &SettlementStatement, proof: &SettlementProof) -> bool {
        if proof.backend != ProofBackend::Transparent {
            return false;
        }
        let Ok(p) = TransparentPayload::from_bytes(&proof.payload) else {
            return false;
        };
        p.statement == statement.digest() && self.first_violation(statement, &p.pad, &p.witness).is_none()
    }
}

pub fn prove_settlement(
    system: &dyn ProofSystem,
    statement: &SettlementStatement,
    pad: &CommittedRelaxedInstance,
    witness: &CommittedRelaxedWitness,
) -> Result<SettlementProof, PbsError> {
    system.prove(statement, pad, witness)
}

pub fn verify_settlement(system: &dyn ProofSystem, statement: &SettlementStatement, proof: &SettlementProof) -> bool {
    system.verify(statement, proof)
}

/// Builds `X` in fold order and checks it against the context digest.
pub fn assemble_submission(
    vk: &Digest32,
    statement: SettlementStatement,
    proof: SettlementProof,
    credentials: &[ResCredential],
) -> Result<BatchSubmission, PbsError> {
    let x: Vec<(Fp, PublicKey)> = credentials.iter().map(|c| (c.hash_phc, c.pk_seed)).collect();
    if x.len() as u64 != statement.num_users() || input_digest(vk, &x) != statement.x_digest() {
        return Err(PbsError::CtxBindingError);
    }
    Ok(BatchSubmission { x, statement, proof })
}

/// Runs padding fold, statement assembly and proving for a materialized
/// batch.
pub fn finalize(
    system: &TransparentProofSystem,
    batch: &MaterializedBatch,
    ctx: &FoldContext,
) -> Result<(SettlementStatement, SettlementProof), PbsError> {
    let fold = padding_fold(&system.shape, &system.keys, batch, &system.pad, ctx)?;
    let statement = SettlementStatement::new(ctx, batch, &fold);
    let proof = system.prove(&statement, &system.pad.instance, &fold.witness)?;
    Ok((statement, proof))
}

/// Whether a batch opened at `opened_block` has outlived its submission
/// window at `now_block`.
pub fn is_expired(opened_block: u64, now_block: u64, t_sub_blocks: u64) -> bool {
    now_block.saturating_sub(opened_block) > t_sub_blocks
}
