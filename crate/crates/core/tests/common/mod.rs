//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use admission::algebra::{Fp, RingElement};
use admission::mkhe::{keygen, Backend, MkheKeyPair, MkheParams};
use admission::mlsags::SeedKeyPair;
use admission::nifs::{fold_unchecked, input_digest, FoldContext};
use admission::pbs::{ProofSystem, TransparentProofSystem};
use admission::pipeline::{encrypt_contribution, Committee, EncryptedContribution, FoldingEngine, MaterializedBatch};
use admission::relation::{
    build_phc_relation, client_generate, make_res_credential, phc_assignment, CommitKeys, CommittedRelaxedInstance,
    CommittedRelaxedWitness, Issuer, R1CSShape, ResCredential, SyntheticRelation, ToySecretKey,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const KEY_SEED: &[u8] = b"integration-tests";

pub enum Relation {
    Phc(Issuer),
    Synthetic(SyntheticRelation),
}

pub struct Fixture {
    pub relation: Relation,
    pub shape: R1CSShape,
    pub keys: CommitKeys,
    pub engine: FoldingEngine,
    pub system: TransparentProofSystem,
}

impl Fixture {
    pub fn phc(ring_dim: usize) -> Self {
        let issuer = Issuer::random(&mut ChaCha20Rng::seed_from_u64(0));
        Self::with(Relation::Phc(issuer), build_phc_relation().0, ring_dim)
    }

    pub fn synthetic(seed: u64, constraints: usize, ring_dim: usize) -> Self {
        let rel = SyntheticRelation::generate(seed, constraints, 2);
        let shape = rel.shape().clone();
        Self::with(Relation::Synthetic(rel), shape, ring_dim)
    }

    fn with(relation: Relation, shape: R1CSShape, ring_dim: usize) -> Self {
        let keys = CommitKeys::generate(KEY_SEED, &shape, ring_dim).unwrap();
        let engine = FoldingEngine::new(&shape, &keys).unwrap();
        let system = TransparentProofSystem::new(&shape, &keys);
        Self { relation, shape, keys, engine, system }
    }

    /// A satisfying `(x, w)`.
    pub fn assignment(&self, rng: &mut ChaCha20Rng) -> (Vec<Fp>, Vec<Fp>) {
        match &self.relation {
            Relation::Phc(issuer) => {
                let holder = ToySecretKey::random(rng);
                let phc = issuer.issue(holder.public_key(), [Fp::random(rng), Fp::random(rng)], rng);
                let sig = holder.sign(phc.hash(), rng);
                phc_assignment(&phc, &sig)
            }
            Relation::Synthetic(rel) => {
                let x = vec![Fp::random(rng), Fp::random(rng)];
                let w = rel.assign(&x);
                (x, w)
            }
        }
    }

    /// An honest credential and its seed key.
    pub fn credential(&self, rng: &mut ChaCha20Rng) -> (ResCredential, SeedKeyPair) {
        let seed = SeedKeyPair::generate(rng);
        let cred = match &self.relation {
            Relation::Phc(issuer) => {
                let holder = ToySecretKey::random(rng);
                let phc = issuer.issue(holder.public_key(), [Fp::random(rng), Fp::random(rng)], rng);
                let sig = holder.sign(phc.hash(), rng);
                let (x, w) = phc_assignment(&phc, &sig);
                let (inst, wit) = client_generate(&self.shape, &x, &w, &self.keys, rng).unwrap();
                make_res_credential(&phc, inst, wit, seed.public()).unwrap()
            }
            Relation::Synthetic(_) => {
                let (x, w) = self.assignment(rng);
                let (instance, witness) = client_generate(&self.shape, &x, &w, &self.keys, rng).unwrap();
                ResCredential { hash_phc: x[0], pk_seed: seed.public(), instance, witness }
            }
        };
        (cred, seed)
    }

    pub fn ctx(&self, creds: &[ResCredential], batch_id: u64) -> FoldContext {
        let x: Vec<_> = creds.iter().map(|c| (c.hash_phc, c.pk_seed)).collect();
        FoldContext::new(1, batch_id, input_digest(&self.system.verifying_key(), &x))
    }
}

pub struct Member {
    pub kp: MkheKeyPair,
    pub credential: ResCredential,
    pub seed: SeedKeyPair,
    pub r_t: Vec<RingElement>,
    pub contribution: EncryptedContribution,
}

/// `n` honest users with encrypted contributions under `backend`.
pub fn members(fix: &Fixture, backend: Backend, n: usize, rng: &mut ChaCha20Rng) -> Vec<Member> {
    let params = MkheParams::new(backend, fix.keys.ring_dim()).unwrap();
    (1..=n as u32)
        .map(|id| {
            let kp = keygen(&params, id, rng);
            let (credential, seed) = fix.credential(rng);
            let r_t = fix.keys.t.random_randomness(rng);
            let contribution =
                encrypt_contribution(&kp, &credential.instance, &credential.witness, &r_t, rng).unwrap();
            Member { kp, credential, seed, r_t, contribution }
        })
        .collect()
}

pub fn credentials(ms: &[Member]) -> Vec<ResCredential> {
    ms.iter().map(|m| m.credential.clone()).collect()
}

/// Runs the encrypted pipeline and fuses the accumulator.
pub fn encrypted_batch(fix: &Fixture, ms: &[Member], ctx: &FoldContext, seed: u64) -> MaterializedBatch {
    let mut committee = Committee::new(ms.iter().map(|m| m.kp.clone()), seed);
    let contributions: Vec<_> = ms.iter().map(|m| m.contribution.clone()).collect();
    let (acc, _) = fix.engine.fold_batch(&contributions, ctx, &mut committee).unwrap();
    fix.engine.collect_and_fuse(&acc, &mut committee).unwrap()
}

/// The plaintext chain with the same cross-term randomness, and the
/// challenge of every step.
pub fn plain_chain(
    fix: &Fixture,
    ms: &[Member],
    ctx: &FoldContext,
) -> (CommittedRelaxedInstance, CommittedRelaxedWitness, Vec<Fp>) {
    let (mut inst, mut wit) = (ms[0].credential.instance.clone(), ms[0].credential.witness.clone());
    let mut challenges = Vec::new();
    for (k, m) in ms.iter().enumerate().skip(1) {
        let out = fold_unchecked(
            &fix.shape,
            &fix.keys,
            (&inst, &wit),
            (&m.credential.instance, &m.credential.witness),
            ctx,
            k as u64 + 1,
            &m.r_t,
        )
        .unwrap();
        challenges.push(out.challenge.v);
        (inst, wit) = (out.instance, out.witness);
    }
    (inst, wit, challenges)
}
