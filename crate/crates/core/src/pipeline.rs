//! Encrypted folding of a batch: accumulator initialization, per-user folds in
//! the encrypted domain, and distributed decryption of the final state.
//!
//! Only two values are ever decrypted during folding: the cross-term
//! commitment `T̄` of each step, and the six accumulator ciphertexts once the
//! batch is complete. No operation returns a plaintext cross-term.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Fp, RingElement};
use crate::commit::{fold_commitments, CommitError, Commitment, Label};
use crate::encoding::{get_seq, put_seq, put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader};
use crate::mkhe::{
    self, add, ct_mul, matrix_mul, scalar_mul, DecryptionShare, MkheError, MkheKeyPair, MultiKeyCiphertext, PartyId,
    PlainMatrix, RingMatrix,
};
use crate::nifs::{derive_challenge, FoldChallenge, FoldContext};
use crate::relation::{CommitKeys, CommittedRelaxedInstance, CommittedRelaxedWitness, R1CSShape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("contribution is missing the encrypted {0:?}")]
    IncompleteContribution(Variable),
    #[error("{what} mismatch: expected {expected}, got {got}")]
    ParamMismatch { what: &'static str, expected: usize, got: usize },
    #[error("unsupported shape: {0}")]
    UnsupportedShape(&'static str),
    #[error(transparent)]
    Mkhe(#[from] MkheError),
    #[error(transparent)]
    Commit(#[from] CommitError),
}

/// The six folded variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    X,
    U,
    E,
    RE,
    W,
    RW,
}

impl Variable {
    pub const ALL: [Variable; 6] = [Variable::X, Variable::U, Variable::E, Variable::RE, Variable::W, Variable::RW];
}

/// A user's encrypted credential set: the six variables under the user's
/// own key, its public commitments, and the encrypted randomness `r_T` the
/// user contributes to its own fold step.
#[derive(Clone, Debug)]
pub struct EncryptedContribution {
    pub party_id: PartyId,
    pub enc: BTreeMap<Variable, MultiKeyCiphertext>,
    pub r_t: MultiKeyCiphertext,
    pub e_bar: Commitment,
    pub w_bar: Commitment,
}

impl EncryptedContribution {
    fn get(&self, v: Variable) -> Result<&MultiKeyCiphertext, PipelineError> {
        self.enc.get(&v).ok_or(PipelineError::IncompleteContribution(v))
    }

    /// Content address of the contribution, used to break arrival ties.
    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::ContentAddress);
        h.update(&self.party_id.to_le_bytes());
        for (v, ct) in &self.enc {
            h.update(&[*v as u8]).encoded(ct);
        }
        h.encoded(&self.r_t).encoded(&self.e_bar).encoded(&self.w_bar);
        h.finish()
    }
}

/// Client side: encrypts a committed credential under the user's key.
pub fn encrypt_contribution<R: RngCore + ?Sized>(
    kp: &MkheKeyPair,
    instance: &CommittedRelaxedInstance,
    witness: &CommittedRelaxedWitness,
    r_t: &[RingElement],
    rng: &mut R,
) -> Result<EncryptedContribution, PipelineError> {
    let pk = kp.public_key();
    let mut enc = BTreeMap::new();
    enc.insert(Variable::X, mkhe::encrypt_field(pk, &instance.x, rng)?);
    enc.insert(Variable::U, mkhe::encrypt_field(pk, &[instance.u], rng)?);
    enc.insert(Variable::E, mkhe::encrypt_field(pk, &witness.e, rng)?);
    enc.insert(Variable::RE, mkhe::encrypt(pk, &witness.r_e, rng)?);
    enc.insert(Variable::W, mkhe::encrypt_field(pk, &witness.w, rng)?);
    enc.insert(Variable::RW, mkhe::encrypt(pk, &witness.r_w, rng)?);
    Ok(EncryptedContribution {
        party_id: kp.party_id(),
        enc,
        r_t: mkhe::encrypt(pk, r_t, rng)?,
        e_bar: instance.e_bar.clone(),
        w_bar: instance.w_bar.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct AccumulatorState {
    pub enc: BTreeMap<Variable, MultiKeyCiphertext>,
    pub e_bar: Commitment,
    pub w_bar: Commitment,
    /// Number of users folded so far.
    pub step: u64,
    pub batch_id: u64,
}

impl AccumulatorState {
    fn get(&self, v: Variable) -> &MultiKeyCiphertext {
        &self.enc[&v]
    }

    /// Union of the key sets of all accumulator ciphertexts.
    pub fn key_set(&self) -> Vec<PartyId> {
        self.enc.values().flat_map(|c| c.key_set().iter().copied()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn ciphertext_bytes(&self) -> usize {
        self.enc.values().map(|c| c.to_bytes().len()).sum()
    }
}

/// One fold step as seen on the public transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub step: u64,
    pub e_acc: Commitment,
    pub w_acc: Commitment,
    pub e_i: Commitment,
    pub w_i: Commitment,
    pub t_bar: Commitment,
    pub challenge: FoldChallenge,
}

impl Encode for FoldRecord {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u64(out, self.step);
        for c in [&self.e_acc, &self.w_acc, &self.e_i, &self.w_i, &self.t_bar] {
            c.encode_to(out);
        }
        self.challenge.v.encode_to(out);
        self.challenge.transcript_digest.encode_to(out);
    }
}

impl Decode for FoldRecord {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let step = r.u64()?;
        let mut cs = Vec::with_capacity(5);
        for _ in 0..5 {
            cs.push(Commitment::decode_from(r)?);
        }
        let v = Fp::decode_from(r)?;
        let transcript_digest = Digest32::decode_from(r)?;
        let mut it = cs.into_iter();
        let mut next = || it.next().expect("five commitments");
        Ok(Self {
            step,
            e_acc: next(),
            w_acc: next(),
            e_i: next(),
            w_i: next(),
            t_bar: next(),
            challenge: FoldChallenge { v, transcript_digest },
        })
    }
}

/// Append-only public record of a batch's fold chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldTranscript {
    pub ctx: FoldContext,
    pub initial: (Commitment, Commitment),
    pub records: Vec<FoldRecord>,
}

impl FoldTranscript {
    pub fn x_digest(&self) -> Digest32 {
        self.ctx.input_digest
    }

    /// Recomputes every challenge and commitment fold; returns the index of
    /// the first inconsistent record.
    pub fn replay(&self) -> Result<(Commitment, Commitment), usize> {
        let (mut e_acc, mut w_acc) = self.initial.clone();
        for (k, rec) in self.records.iter().enumerate() {
            if rec.e_acc != e_acc || rec.w_acc != w_acc || rec.step != k as u64 + 2 {
                return Err(k);
            }
            let ch = derive_challenge(&self.ctx, &rec.e_acc, &rec.w_acc, &rec.e_i, &rec.w_i, &rec.t_bar, rec.step);
            if ch != rec.challenge {
                return Err(k);
            }
            let folded = fold_commitments(&e_acc, &rec.t_bar, ch.v, 1)
                .and_then(|e| fold_commitments(&e, &rec.e_i, ch.v, 2))
                .and_then(|e| Ok((e, fold_commitments(&w_acc, &rec.w_i, ch.v, 1)?)));
            match folded {
                Ok((e, w)) => {
                    e_acc = e;
                    w_acc = w;
                }
                Err(_) => return Err(k),
            }
        }
        Ok((e_acc, w_acc))
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::Transcript);
        h.encoded(&self.ctx).encoded(&self.initial.0).encoded(&self.initial.1);
        for r in &self.records {
            h.encoded(r);
        }
        h.finish()
    }
}

impl Encode for FoldTranscript {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.ctx.encode_to(out);
        self.initial.0.encode_to(out);
        self.initial.1.encode_to(out);
        put_seq(out, &self.records);
    }
}

impl Decode for FoldTranscript {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            ctx: FoldContext::decode_from(r)?,
            initial: (Commitment::decode_from(r)?, Commitment::decode_from(r)?),
            records: get_seq(r, 8)?,
        })
    }
}

/// The parties holding decryption keys for a batch. Parties listed as
/// withholding never release shares.
pub struct Committee {
    members: BTreeMap<PartyId, MkheKeyPair>,
    withholding: BTreeSet<PartyId>,
    rng: ChaCha20Rng,
}

impl Committee {
    pub fn new(members: impl IntoIterator<Item = MkheKeyPair>, seed: u64) -> Self {
        Self {
            members: members.into_iter().map(|k| (k.party_id(), k)).collect(),
            withholding: BTreeSet::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn withhold(&mut self, party: PartyId) {
        self.withholding.insert(party);
    }

    pub fn release(&mut self, party: PartyId) {
        self.withholding.remove(&party);
    }

    pub fn remove(&mut self, party: PartyId) {
        self.members.remove(&party);
    }

    /// Runs both decryption rounds among the available members and returns
    /// their shares. Withholding parties contribute nothing.
    pub fn collect_shares(&mut self, ct: &MultiKeyCiphertext) -> Result<Vec<DecryptionShare>, MkheError> {
        let present: Vec<&MkheKeyPair> = ct
            .key_set()
            .iter()
            .filter(|p| !self.withholding.contains(p))
            .filter_map(|p| self.members.get(p))
            .collect();
        let missing: Vec<PartyId> =
            ct.key_set().iter().copied().filter(|p| !present.iter().any(|k| k.party_id() == *p)).collect();
        if !missing.is_empty() {
            return Err(MkheError::IncompleteShares { missing });
        }
        let mut relays = Vec::new();
        for kp in &present {
            relays.extend(mkhe::relay_shares(kp, ct, &mut self.rng)?);
        }
        present.iter().map(|kp| mkhe::partial_decrypt(kp, ct, &relays, &mut self.rng)).collect()
    }

    pub fn decrypt(&mut self, ct: &MultiKeyCiphertext) -> Result<Vec<RingElement>, MkheError> {
        let shares = self.collect_shares(ct)?;
        mkhe::combine(&shares, ct)
    }
}

/// The fused plaintext accumulator after the last user fold.
#[derive(Clone, Debug)]
pub struct MaterializedBatch {
    /// `𝓘_acc,N = (Ē_acc, u_f, W̄_acc, x_f)`.
    pub instance: CommittedRelaxedInstance,
    /// `(E_f, r_Ef, W_f, r_Wf)`.
    pub witness: CommittedRelaxedWitness,
    pub num_users: u64,
}

fn constants(v: &[RingElement]) -> Vec<Fp> {
    v.iter().map(|r| r.constant_term()).collect()
}

/// Column blocks `(M_W, M_x, M_u)` of one constraint matrix.
struct Blocks([PlainMatrix; 3]);

/// Shape-dependent public data for encrypted folding.
pub struct FoldingEngine {
    shape: R1CSShape,
    keys: CommitKeys,
    a: Blocks,
    b: Blocks,
    c: Blocks,
    g_t: PlainMatrix,
    h_t: PlainMatrix,
}

impl FoldingEngine {
    pub fn new(shape: &R1CSShape, keys: &CommitKeys) -> Result<Self, PipelineError> {
        if shape.num_public() == 0 || shape.num_witness() == 0 || shape.num_constraints() == 0 {
            return Err(PipelineError::UnsupportedShape("public input, witness and constraints must be nonempty"));
        }
        if keys.t.m() != shape.num_constraints() {
            return Err(PipelineError::ParamMismatch {
                what: "cross-term key width",
                expected: shape.num_constraints(),
                got: keys.t.m(),
            });
        }
        let blocks = |m| {
            let (w, x, u) = shape.split_columns(m);
            Blocks([PlainMatrix::Field(w), PlainMatrix::Field(x), PlainMatrix::Field(u)])
        };
        Ok(Self {
            a: blocks(shape.a()),
            b: blocks(shape.b()),
            c: blocks(shape.c()),
            g_t: PlainMatrix::Ring(RingMatrix::commit_g(&keys.t)),
            h_t: PlainMatrix::Ring(RingMatrix::commit_h(&keys.t, shape.num_constraints())),
            shape: shape.clone(),
            keys: keys.clone(),
        })
    }

    pub fn shape(&self) -> &R1CSShape {
        &self.shape
    }

    pub fn keys(&self) -> &CommitKeys {
        &self.keys
    }

    fn check_lengths(&self, enc: &BTreeMap<Variable, MultiKeyCiphertext>) -> Result<(), PipelineError> {
        let s = &self.shape;
        let k = &self.keys;
        let expected = [
            (Variable::X, s.num_public()),
            (Variable::U, 1),
            (Variable::E, s.num_constraints()),
            (Variable::RE, k.e.l()),
            (Variable::W, s.num_witness()),
            (Variable::RW, k.w.l()),
        ];
        for (v, len) in expected {
            let ct = enc.get(&v).ok_or(PipelineError::IncompleteContribution(v))?;
            if ct.plain_len() != len {
                return Err(PipelineError::ParamMismatch { what: "ciphertext length", expected: len, got: ct.plain_len() });
            }
        }
        Ok(())
    }

    /// Step 1: the first user's ciphertexts and commitments become the
    /// accumulator.
    pub fn init_accumulator(
        &self,
        first: &EncryptedContribution,
        ctx: &FoldContext,
    ) -> Result<(AccumulatorState, FoldTranscript), PipelineError> {
        self.check_lengths(&first.enc)?;
        let acc = AccumulatorState {
            enc: first.enc.clone(),
            e_bar: first.e_bar.clone(),
            w_bar: first.w_bar.clone(),
            step: 1,
            batch_id: ctx.batch_id,
        };
        let transcript =
            FoldTranscript { ctx: ctx.clone(), initial: (first.e_bar.clone(), first.w_bar.clone()), records: vec![] };
        Ok((acc, transcript))
    }

    /// `M·Z = M_W·ĉ_W ⊕ M_x·ĉ_x ⊕ M_u·ĉ_u`.
    fn times_z(
        &self,
        m: &Blocks,
        w: &MultiKeyCiphertext,
        x: &MultiKeyCiphertext,
        u: &MultiKeyCiphertext,
    ) -> Result<MultiKeyCiphertext, MkheError> {
        let [mw, mx, mu] = &m.0;
        add(&add(&matrix_mul(mw, w)?, &matrix_mul(mx, x)?)?, &matrix_mul(mu, u)?)
    }

    /// `ĉ_T = ĉ_AZacc ⊗ ĉ_BZi ⊕ ĉ_AZi ⊗ ĉ_BZacc ⊕ (−1)⊙ĉ_uacc ⊗ ĉ_CZi ⊕ (−1)⊙ĉ_ui ⊗ ĉ_CZacc`.
    pub fn encrypted_cross_term(
        &self,
        acc: &AccumulatorState,
        user: &EncryptedContribution,
    ) -> Result<MultiKeyCiphertext, PipelineError> {
        self.check_lengths(&user.enc)?;
        let (wa, xa, ua) = (acc.get(Variable::W), acc.get(Variable::X), acc.get(Variable::U));
        let (wi, xi, ui) = (user.get(Variable::W)?, user.get(Variable::X)?, user.get(Variable::U)?);
        let az_acc = self.times_z(&self.a, wa, xa, ua)?;
        let bz_acc = self.times_z(&self.b, wa, xa, ua)?;
        let cz_acc = self.times_z(&self.c, wa, xa, ua)?;
        let az_i = self.times_z(&self.a, wi, xi, ui)?;
        let bz_i = self.times_z(&self.b, wi, xi, ui)?;
        let cz_i = self.times_z(&self.c, wi, xi, ui)?;
        let neg = Fp::MINUS_ONE;
        let t = add(&ct_mul(&az_acc, &bz_i)?, &ct_mul(&az_i, &bz_acc)?)?;
        let t = add(&t, &scalar_mul(neg, &ct_mul(ua, &cz_i)?)?)?;
        Ok(add(&t, &scalar_mul(neg, &ct_mul(ui, &cz_acc)?)?)?)
    }

    /// `ĉ_T̄ = G_T·c_rT ⊕ H_T·ĉ_T`, then `T̄` by distributed decryption of
    /// `ĉ_T̄` alone.
    pub fn encrypted_commit_cross_term(
        &self,
        c_t: &MultiKeyCiphertext,
        c_r_t: &MultiKeyCiphertext,
        committee: &mut Committee,
    ) -> Result<(MultiKeyCiphertext, Commitment), PipelineError> {
        let c_t_bar = add(&matrix_mul(&self.g_t, c_r_t)?, &matrix_mul(&self.h_t, c_t)?)?;
        let value = committee.decrypt(&c_t_bar)?;
        Ok((c_t_bar, Commitment::from_parts(Label::T, value)))
    }

    /// Folds `user` into `acc` as step `acc.step + 1` and appends the public
    /// record to `transcript`.
    pub fn fold_step(
        &self,
        acc: &AccumulatorState,
        user: &EncryptedContribution,
        transcript: &mut FoldTranscript,
        committee: &mut Committee,
    ) -> Result<AccumulatorState, PipelineError> {
        let step = acc.step + 1;
        let c_t = self.encrypted_cross_term(acc, user)?;
        let (_, t_bar) = self.encrypted_commit_cross_term(&c_t, &user.r_t, committee)?;
        let challenge =
            derive_challenge(&transcript.ctx, &acc.e_bar, &acc.w_bar, &user.e_bar, &user.w_bar, &t_bar, step);
        let v = challenge.v;
        let v2 = v * v;

        let lin = |var: Variable| -> Result<MultiKeyCiphertext, PipelineError> {
            Ok(add(acc.get(var), &scalar_mul(v, user.get(var)?)?)?)
        };
        let quad = |var: Variable, mid: &MultiKeyCiphertext| -> Result<MultiKeyCiphertext, PipelineError> {
            let t = add(acc.get(var), &scalar_mul(v, mid)?)?;
            Ok(add(&t, &scalar_mul(v2, user.get(var)?)?)?)
        };
        let mut enc = BTreeMap::new();
        for var in [Variable::X, Variable::U, Variable::W, Variable::RW] {
            enc.insert(var, lin(var)?);
        }
        enc.insert(Variable::E, quad(Variable::E, &c_t)?);
        enc.insert(Variable::RE, quad(Variable::RE, &user.r_t)?);

        let e_bar = fold_commitments(&fold_commitments(&acc.e_bar, &t_bar, v, 1)?, &user.e_bar, v, 2)?;
        let w_bar = fold_commitments(&acc.w_bar, &user.w_bar, v, 1)?;
        transcript.records.push(FoldRecord {
            step,
            e_acc: acc.e_bar.clone(),
            w_acc: acc.w_bar.clone(),
            e_i: user.e_bar.clone(),
            w_i: user.w_bar.clone(),
            t_bar,
            challenge,
        });
        Ok(AccumulatorState { enc, e_bar, w_bar, step, batch_id: acc.batch_id })
    }

    /// Folds a whole ordered batch.
    pub fn fold_batch(
        &self,
        users: &[EncryptedContribution],
        ctx: &FoldContext,
        committee: &mut Committee,
    ) -> Result<(AccumulatorState, FoldTranscript), PipelineError> {
        let (first, rest) = users.split_first().ok_or(PipelineError::ParamMismatch { what: "batch size", expected: 1, got: 0 })?;
        let (mut acc, mut transcript) = self.init_accumulator(first, ctx)?;
        for u in rest {
            acc = self.fold_step(&acc, u, &mut transcript, committee)?;
        }
        Ok((acc, transcript))
    }

    /// Combines per-variable share sets into the plaintext accumulator.
    pub fn fuse(
        &self,
        acc: &AccumulatorState,
        shares: &BTreeMap<Variable, Vec<DecryptionShare>>,
    ) -> Result<MaterializedBatch, PipelineError> {
        let mut open = BTreeMap::new();
        for var in Variable::ALL {
            let s = shares.get(&var).map(Vec::as_slice).unwrap_or(&[]);
            open.insert(var, mkhe::combine(s, acc.get(var))?);
        }
        let take = |v: Variable| open[&v].clone();
        Ok(MaterializedBatch {
            instance: CommittedRelaxedInstance {
                e_bar: acc.e_bar.clone(),
                u: take(Variable::U)[0].constant_term(),
                w_bar: acc.w_bar.clone(),
                x: constants(&take(Variable::X)),
            },
            witness: CommittedRelaxedWitness {
                e: constants(&take(Variable::E)),
                r_e: take(Variable::RE),
                w: constants(&take(Variable::W)),
                r_w: take(Variable::RW),
            },
            num_users: acc.step,
        })
    }

    /// Stage 3: every key holder releases shares for all six ciphertexts.
    pub fn collect_and_fuse(
        &self,
        acc: &AccumulatorState,
        committee: &mut Committee,
    ) -> Result<MaterializedBatch, PipelineError> {
        let mut shares = BTreeMap::new();
        for var in Variable::ALL {
            shares.insert(var, committee.collect_shares(acc.get(var))?);
        }
        self.fuse(acc, &shares)
    }
}
