//! End-to-end simulation: credential generation, encrypted batch folding,
//! finalization, settlement, and provisioning, with an optional fault plan.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ed25519_dalek::SigningKey;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Fp;
use crate::encoding::{Digest32, Encode};
use crate::ledger::{
    amortized_cost, baseline_cost, capacity, mlsags_gas, soul_message, to_f64, Chain, GasModel, LedgerError,
    Receipt, Transaction,
};
use crate::mkhe::{keygen, Backend, MkheError, MkheKeyPair, MkheParams};
use crate::mlsags::{lrs_sign, select_ring, LrsError, SeedKeyPair};
use crate::nifs::{input_digest, FoldContext};
use crate::pbs::{assemble_submission, finalize, is_expired, PbsError, ProofSystem, TransparentProofSystem};
use crate::pipeline::{encrypt_contribution, Committee, FoldTranscript, FoldingEngine, MaterializedBatch, PipelineError};
use crate::relation::phc::{build_phc_relation, phc_assignment, Issuer, ToySecretKey};
use crate::relation::{
    check_c1, client_generate, generate_unchecked, make_res_credential, CommitKeys, R1CSShape, RelationError,
    ResCredential, SyntheticRelation,
};
use crate::store::{ContentAddress, NamePointer, Store, StoreError};

/// Commitment-key seed shared by every participant.
pub const COMMIT_KEY_SEED: &[u8] = b"admission/commit-keys/v1";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Mkhe(#[from] MkheError),
    #[error(transparent)]
    Pbs(#[from] PbsError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Lrs(#[from] LrsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    /// The user's client commits to an unsatisfying witness.
    BadWitness,
    /// After settlement, the user's credential is resubmitted in a new batch.
    DuplicatePhc,
    /// The user never releases decryption shares.
    WithholdShare,
    /// The submitter of the batch with this ordinal goes silent.
    PbsStall,
    /// The user binds a second soul address.
    Rebind,
}

impl FaultKind {
    pub fn name(self) -> &'static str {
        match self {
            FaultKind::BadWitness => "bad-witness",
            FaultKind::DuplicatePhc => "duplicate-phc",
            FaultKind::WithholdShare => "withhold-share",
            FaultKind::PbsStall => "pbs-stall",
            FaultKind::Rebind => "rebind",
        }
    }

    /// Whether the affected user is still expected to be admitted and
    /// provisioned.
    pub fn user_survives(self) -> bool {
        !matches!(self, FaultKind::BadWitness | FaultKind::WithholdShare)
    }
}

impl FromStr for FaultKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [FaultKind::BadWitness, FaultKind::DuplicatePhc, FaultKind::WithholdShare, FaultKind::PbsStall, FaultKind::Rebind]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown fault kind {s:?}")))
    }
}

/// `step` is a 1-based user index, or a 1-based batch ordinal for
/// [`FaultKind::PbsStall`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fault {
    pub step: usize,
    pub kind: FaultKind,
}

/// Parses a fault plan: one `<step> <kind>` per line, `#` starts a comment.
pub fn parse_fault_plan(text: &str) -> Result<Vec<Fault>, ScenarioError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(step), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ScenarioError::Invalid(format!("fault plan line {}: expected `<step> <kind>`", no + 1)));
        };
        let step = step
            .parse::<usize>()
            .ok()
            .filter(|s| *s >= 1)
            .ok_or_else(|| ScenarioError::Invalid(format!("fault plan line {}: bad step {step:?}", no + 1)))?;
        out.push(Fault { step, kind: kind.parse()? });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationKind {
    /// The credential relation.
    Phc,
    /// A seeded random relation of `synthetic_constraints` rows.
    Synthetic,
}

/// Flat key-value scenario file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    #[serde(default = "default_ring")]
    pub ring: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default)]
    pub seed: u64,
    /// Gas profile path, relative to the config file.
    pub profile: Option<PathBuf>,
    /// Fault plan path, relative to the config file.
    pub faults: Option<PathBuf>,
    #[serde(default = "default_relation")]
    pub relation: RelationKind,
    #[serde(default = "default_synthetic_constraints")]
    pub synthetic_constraints: usize,
    #[serde(default = "default_ring_dim")]
    pub ring_dim: usize,
    /// Identities registered at genesis, available as ring decoys. Defaults
    /// to `ring - 1` so a full ring exists even if only one user is admitted.
    pub genesis: Option<usize>,
    #[serde(default = "default_chain_id")]
    pub chain_id: u64,
    #[serde(default = "default_t_sub")]
    pub t_sub_blocks: u64,
}

fn default_ring() -> usize {
    11
}
fn default_backend() -> Backend {
    Backend::Transparent
}
fn default_relation() -> RelationKind {
    RelationKind::Phc
}
fn default_synthetic_constraints() -> usize {
    16
}
fn default_ring_dim() -> usize {
    64
}
fn default_chain_id() -> u64 {
    1
}
fn default_t_sub() -> u64 {
    crate::pbs::DEFAULT_T_SUB_BLOCKS
}

/// A fully specified run. Given the code version, it determines every
/// protocol output.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub n: usize,
    pub ring: usize,
    pub backend: Backend,
    pub seed: u64,
    pub faults: Vec<Fault>,
    pub model: GasModel,
    pub relation: RelationKind,
    pub synthetic_constraints: usize,
    pub ring_dim: usize,
    pub genesis: usize,
    pub chain_id: u64,
    pub t_sub_blocks: u64,
}

impl Scenario {
    pub fn new(n: usize, ring: usize, backend: Backend, seed: u64) -> Self {
        Self {
            n,
            ring,
            backend,
            seed,
            faults: Vec::new(),
            model: GasModel::default(),
            relation: RelationKind::Phc,
            synthetic_constraints: default_synthetic_constraints(),
            ring_dim: default_ring_dim(),
            genesis: ring.saturating_sub(1),
            chain_id: default_chain_id(),
            t_sub_blocks: default_t_sub(),
        }
    }

    pub fn from_config(cfg: &ScenarioConfig, base: &Path) -> Result<Self, ScenarioError> {
        let model = match &cfg.profile {
            Some(p) => GasModel::load(base.join(p))?,
            None => GasModel::default(),
        };
        let faults = match &cfg.faults {
            Some(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ScenarioError::Invalid(format!("{}: {e}", path.display())))?;
                parse_fault_plan(&text)?
            }
            None => Vec::new(),
        };
        Ok(Self {
            n: cfg.n,
            ring: cfg.ring,
            backend: cfg.backend,
            seed: cfg.seed,
            faults,
            model,
            relation: cfg.relation,
            synthetic_constraints: cfg.synthetic_constraints,
            ring_dim: cfg.ring_dim,
            genesis: cfg.genesis.unwrap_or(cfg.ring.saturating_sub(1)),
            chain_id: cfg.chain_id,
            t_sub_blocks: cfg.t_sub_blocks,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| ScenarioError::Invalid(format!("{}: {e}", path.display())))?;
        let cfg: ScenarioConfig =
            toml::from_str(&text).map_err(|e| ScenarioError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_config(&cfg, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.n == 0 {
            return Err(ScenarioError::Invalid("n must be at least 1".into()));
        }
        if self.ring == 0 {
            return Err(ScenarioError::Invalid("ring must be at least 1".into()));
        }
        for f in &self.faults {
            if f.kind != FaultKind::PbsStall && f.step > self.n {
                return Err(ScenarioError::Invalid(format!("fault {} targets user {} of {}", f.kind.name(), f.step, self.n)));
            }
        }
        Ok(())
    }

    fn user_faults(&self, user: usize) -> BTreeSet<FaultKind> {
        self.faults.iter().filter(|f| f.kind != FaultKind::PbsStall && f.step == user).map(|f| f.kind).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UserOutcome {
    pub user: usize,
    pub faults: Vec<FaultKind>,
    pub admitted: bool,
    pub provisioned: bool,
    pub excluded: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchReport {
    pub batch_id: u64,
    pub members: Vec<usize>,
    pub outcome: String,
    pub transcript_digest: Option<String>,
    pub fold_steps: usize,
    pub fold_step_ms_avg: f64,
    pub fuse_ms: f64,
    pub finalize_ms: f64,
    pub accumulator_bytes: usize,
    pub settlement_gas: u64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub client_generate_ms_max: f64,
    pub fold_step_ms_avg: f64,
    pub fuse_ms_total: f64,
    pub finalize_ms_total: f64,
    pub chain_seconds: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GasReport {
    pub settlement_total: u64,
    pub provisioning_total: u64,
    pub provisioning_per_user: u64,
    pub amortized_measured: f64,
    pub amortized_model: f64,
    pub total_used: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunMetrics {
    pub n: usize,
    pub ring: usize,
    pub backend: Backend,
    pub seed: u64,
    pub users: Vec<UserOutcome>,
    pub batches: Vec<BatchReport>,
    pub timings: Timings,
    pub gas: GasReport,
    pub admitted: usize,
    pub provisioned: usize,
    /// `(kind, reason)` of every rejected transaction, in log order.
    pub rejections: Vec<(String, String)>,
    pub transcript_digests: Vec<String>,
    pub ledger_digest: String,
}

impl RunMetrics {
    /// Every user without a disqualifying fault was admitted and provisioned.
    pub fn success(&self) -> bool {
        self.users
            .iter()
            .filter(|u| u.faults.iter().all(|f| f.user_survives()))
            .all(|u| u.admitted && u.provisioned)
    }

    pub fn rejections_with(&self, reason: &str) -> usize {
        self.rejections.iter().filter(|(_, r)| r == reason).count()
    }
}

pub struct RunOutput {
    pub metrics: RunMetrics,
    pub ledger_snapshot: Vec<u8>,
    pub tx_log: String,
    pub receipts: Vec<Receipt>,
    pub store: Store,
    /// Stored transcript of every settled batch.
    pub transcripts: Vec<ContentAddress>,
}

struct SimUser {
    index: usize,
    credential: ResCredential,
    seed: SeedKeyPair,
    mkhe: MkheKeyPair,
}

struct Folded {
    members: Vec<usize>,
    ctx: FoldContext,
    transcript: FoldTranscript,
    batch: MaterializedBatch,
    report: BatchReport,
}

enum FoldFailure {
    Withheld(Vec<usize>),
    Unsatisfied,
}

struct Runner<'a> {
    s: &'a Scenario,
    rng: ChaCha20Rng,
    shape: R1CSShape,
    keys: CommitKeys,
    engine: FoldingEngine,
    system: TransparentProofSystem,
    chain: Chain,
    store: Store,
    pbs_key: SigningKey,
    pointer_seq: u64,
    users: Vec<SimUser>,
    next_batch_id: u64,
    excluded: BTreeMap<usize, String>,
    batches: Vec<BatchReport>,
    client_ms: Vec<f64>,
    transcripts: Vec<ContentAddress>,
    transcript_digests: Vec<String>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl<'a> Runner<'a> {
    fn new(s: &'a Scenario) -> Result<Self, ScenarioError> {
        s.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
        let shape = match s.relation {
            RelationKind::Phc => build_phc_relation().0,
            RelationKind::Synthetic => SyntheticRelation::generate(s.seed, s.synthetic_constraints, 2).shape().clone(),
        };
        let keys = CommitKeys::generate(COMMIT_KEY_SEED, &shape, s.ring_dim)?;
        let engine = FoldingEngine::new(&shape, &keys)?;
        let system = TransparentProofSystem::new(&shape, &keys);
        let mut chain = Chain::new(s.model.clone(), Box::new(system.clone()));
        for _ in 0..s.genesis {
            let kp = SeedKeyPair::generate(&mut rng);
            chain.state.phc_registry.insert(Fp::random(&mut rng), kp.public());
        }
        let pbs_key = SigningKey::generate(&mut rng);
        Ok(Self {
            s,
            rng,
            shape,
            keys,
            engine,
            system,
            chain,
            store: Store::in_memory(),
            pbs_key,
            pointer_seq: 0,
            users: Vec::new(),
            next_batch_id: 1,
            excluded: BTreeMap::new(),
            batches: Vec::new(),
            client_ms: Vec::new(),
            transcripts: Vec::new(),
            transcript_digests: Vec::new(),
        })
    }

    /// Phase I for every user.
    fn generate_users(&mut self) -> Result<(), ScenarioError> {
        let params = MkheParams::new(self.s.backend, self.s.ring_dim)?;
        let issuer = Issuer::random(&mut self.rng);
        let synthetic = match self.s.relation {
            RelationKind::Synthetic => Some(SyntheticRelation::generate(self.s.seed, self.s.synthetic_constraints, 2)),
            RelationKind::Phc => None,
        };
        for index in 1..=self.s.n {
            let start = Instant::now();
            let bad = self.s.user_faults(index).contains(&FaultKind::BadWitness);
            let seed = SeedKeyPair::generate(&mut self.rng);
            let mkhe = keygen(&params, index as u32, &mut self.rng);
            let credential = match &synthetic {
                None => {
                    let holder = ToySecretKey::random(&mut self.rng);
                    let attrs = [Fp::random(&mut self.rng), Fp::random(&mut self.rng)];
                    let phc = issuer.issue(holder.public_key(), attrs, &mut self.rng);
                    let sig = holder.sign(phc.hash(), &mut self.rng);
                    let (x, mut w) = phc_assignment(&phc, &sig);
                    let (inst, wit) = if bad {
                        let last = w.len() - 1;
                        w[last] += Fp::ONE;
                        generate_unchecked(&self.shape, &x, &w, &self.keys, &mut self.rng)?
                    } else {
                        client_generate(&self.shape, &x, &w, &self.keys, &mut self.rng)?
                    };
                    make_res_credential(&phc, inst, wit, seed.public())?
                }
                Some(rel) => {
                    let x = vec![Fp::random(&mut self.rng), Fp::random(&mut self.rng)];
                    let mut w = rel.assign(&x);
                    let (instance, witness) = if bad {
                        w[0] += Fp::ONE;
                        generate_unchecked(&self.shape, &x, &w, &self.keys, &mut self.rng)?
                    } else {
                        client_generate(&self.shape, &x, &w, &self.keys, &mut self.rng)?
                    };
                    ResCredential { hash_phc: x[0], pk_seed: seed.public(), instance, witness }
                }
            };
            self.client_ms.push(ms(start));
            self.users.push(SimUser { index, credential, seed, mkhe });
        }
        Ok(())
    }

    fn user(&self, index: usize) -> &SimUser {
        &self.users[index - 1]
    }

    fn take_batch_id(&mut self) -> u64 {
        let id = self.next_batch_id;
        self.next_batch_id += 1;
        id
    }

    /// Phase II for one ordered member list.
    fn fold_once(&mut self, members: &[usize]) -> Result<Result<Folded, FoldFailure>, ScenarioError> {
        let batch_id = self.take_batch_id();
        if members.is_empty() {
            return Ok(Err(FoldFailure::Unsatisfied));
        }
        let x: Vec<(Fp, _)> =
            members.iter().map(|&i| (self.user(i).credential.hash_phc, self.user(i).credential.pk_seed)).collect();
        let ctx = FoldContext::new(self.s.chain_id, batch_id, input_digest(&self.system.verifying_key(), &x));

        let mut contributions = Vec::with_capacity(members.len());
        for &i in members {
            let start = Instant::now();
            let r_t = self.keys.t.random_randomness(&mut self.rng);
            let u = &self.users[i - 1];
            contributions.push(encrypt_contribution(
                &u.mkhe,
                &u.credential.instance,
                &u.credential.witness,
                &r_t,
                &mut self.rng,
            )?);
            self.client_ms[i - 1] = self.client_ms[i - 1].max(ms(start));
        }
        let committee_seed = self.rng.next_u64();
        let mut committee = Committee::new(members.iter().map(|&i| self.user(i).mkhe.clone()), committee_seed);
        for &i in members {
            if self.s.user_faults(i).contains(&FaultKind::WithholdShare) {
                committee.withhold(i as u32);
            }
        }

        let withheld = |e: PipelineError| -> Result<FoldFailure, ScenarioError> {
            match e {
                PipelineError::Mkhe(MkheError::IncompleteShares { missing }) => {
                    Ok(FoldFailure::Withheld(missing.into_iter().map(|p| p as usize).collect()))
                }
                other => Err(other.into()),
            }
        };

        let (mut acc, mut transcript) = self.engine.init_accumulator(&contributions[0], &ctx)?;
        let mut step_ms = Vec::new();
        for c in &contributions[1..] {
            let start = Instant::now();
            match self.engine.fold_step(&acc, c, &mut transcript, &mut committee) {
                Ok(next) => acc = next,
                Err(e) => return Ok(Err(withheld(e)?)),
            }
            step_ms.push(ms(start));
        }
        let start = Instant::now();
        let batch = match self.engine.collect_and_fuse(&acc, &mut committee) {
            Ok(b) => b,
            Err(e) => return Ok(Err(withheld(e)?)),
        };
        let fuse_ms = ms(start);
        if !check_c1(&self.shape, &batch.instance, &batch.witness, &self.keys) {
            return Ok(Err(FoldFailure::Unsatisfied));
        }
        let report = BatchReport {
            batch_id,
            members: members.to_vec(),
            outcome: String::new(),
            transcript_digest: Some(transcript.digest().to_hex()),
            fold_steps: step_ms.len(),
            fold_step_ms_avg: if step_ms.is_empty() { 0.0 } else { step_ms.iter().sum::<f64>() / step_ms.len() as f64 },
            fuse_ms,
            finalize_ms: 0.0,
            accumulator_bytes: acc.ciphertext_bytes(),
            settlement_gas: 0,
        };
        Ok(Ok(Folded { members: members.to_vec(), ctx, transcript, batch, report }))
    }

    fn failed_report(&self, members: &[usize], outcome: String) -> BatchReport {
        BatchReport {
            batch_id: self.next_batch_id - 1,
            members: members.to_vec(),
            outcome,
            transcript_digest: None,
            fold_steps: 0,
            fold_step_ms_avg: 0.0,
            fuse_ms: 0.0,
            finalize_ms: 0.0,
            accumulator_bytes: 0,
            settlement_gas: 0,
        }
    }

    /// Folds `members`, restarting without parties that withhold shares or
    /// whose contribution breaks satisfiability. The latter are located by
    /// leave-one-out refolding.
    fn fold_with_restarts(&mut self, mut members: Vec<usize>) -> Result<Option<Folded>, ScenarioError> {
        loop {
            if members.is_empty() {
                return Ok(None);
            }
            match self.fold_once(&members)? {
                Ok(f) => return Ok(Some(f)),
                Err(FoldFailure::Withheld(missing)) => {
                    let r = self.failed_report(&members, format!("restarted: shares withheld by {missing:?}"));
                    self.batches.push(r);
                    tracing::warn!(?missing, "decryption shares withheld, restarting");
                    for p in missing {
                        self.excluded.insert(p, "withheld decryption shares".into());
                        members.retain(|m| *m != p);
                    }
                }
                Err(FoldFailure::Unsatisfied) => {
                    let r = self.failed_report(&members, "restarted: accumulator unsatisfied".into());
                    self.batches.push(r);
                    let mut found = None;
                    for j in 0..members.len() {
                        let mut sub = members.clone();
                        let culprit = sub.remove(j);
                        if let Ok(f) = self.fold_once(&sub)? {
                            found = Some((culprit, f));
                            break;
                        }
                    }
                    match found {
                        Some((culprit, f)) => {
                            tracing::warn!(user = culprit, "unsatisfying contribution excluded");
                            self.excluded.insert(culprit, "unsatisfying contribution".into());
                            return Ok(Some(f));
                        }
                        None => {
                            for m in &members {
                                self.excluded.insert(*m, "batch could not be repaired".into());
                            }
                            return Ok(None);
                        }
                    }
                }
            }
        }
    }

    fn store_transcript(&mut self, t: &FoldTranscript) -> Result<ContentAddress, ScenarioError> {
        for r in &t.records {
            self.store.put_encoded(r)?;
        }
        let root = self.store.put(&t.to_bytes())?;
        self.pointer_seq += 1;
        self.store.publish(&NamePointer::sign(&self.pbs_key, root, self.pointer_seq))?;
        Ok(root)
    }

    /// Phase III and the settlement transaction for a folded batch.
    fn settle(&mut self, mut f: Folded) -> Result<(), ScenarioError> {
        let start = Instant::now();
        let (statement, proof) = finalize(&self.system, &f.batch, &f.ctx)?;
        let creds: Vec<ResCredential> = f.members.iter().map(|&i| self.user(i).credential.clone()).collect();
        let sub = assemble_submission(&self.system.verifying_key(), statement, proof, &creds)?;
        f.report.finalize_ms = ms(start);
        let root = self.store_transcript(&f.transcript)?;
        let tx = self.chain.submit(Transaction::Settle(Box::new(sub)));
        self.chain.produce_block();
        let receipt = self.chain.receipt(tx).expect("settlement included").clone();
        f.report.settlement_gas = receipt.gas;
        f.report.outcome = match &receipt.reason {
            None => "settled".into(),
            Some(r) => format!("rejected: {r}"),
        };
        tracing::info!(batch = f.report.batch_id, members = ?f.members, outcome = %f.report.outcome, gas = receipt.gas, "settlement");
        if receipt.accepted {
            self.transcripts.push(root);
            self.transcript_digests.push(f.transcript.digest().to_hex());
        }
        self.batches.push(f.report);
        Ok(())
    }

    fn run_batches(&mut self) -> Result<(), ScenarioError> {
        let mut stalls: BTreeSet<usize> =
            self.s.faults.iter().filter(|f| f.kind == FaultKind::PbsStall).map(|f| f.step).collect();
        let mut pending: VecDeque<usize> = (1..=self.s.n).collect();
        let mut ordinal = 0;
        while !pending.is_empty() {
            let take = self.s.n.min(pending.len());
            let members: Vec<usize> = pending.drain(..take).collect();
            ordinal += 1;
            let opened = self.chain.state.block_height;
            let Some(mut f) = self.fold_with_restarts(members)? else { continue };
            if stalls.remove(&ordinal) {
                while !is_expired(opened, self.chain.state.block_height, self.s.t_sub_blocks) {
                    self.chain.produce_block();
                }
                f.report.outcome = "expired: submitter stalled, users re-queued".into();
                self.batches.push(f.report);
                for m in f.members.into_iter().rev() {
                    pending.push_front(m);
                }
                continue;
            }
            self.settle(f)?;
        }
        Ok(())
    }

    /// Resubmits each `duplicate-phc` user's credential under a fresh seed
    /// key in a batch of its own.
    fn replay_duplicates(&mut self) -> Result<(), ScenarioError> {
        let params = MkheParams::new(self.s.backend, self.s.ring_dim)?;
        let dups: Vec<usize> =
            self.s.faults.iter().filter(|f| f.kind == FaultKind::DuplicatePhc).map(|f| f.step).collect();
        for i in dups {
            let seed = SeedKeyPair::generate(&mut self.rng);
            let party = (self.users.len() + 1) as u32;
            let mkhe = keygen(&params, party, &mut self.rng);
            let mut credential = self.user(i).credential.clone();
            credential.pk_seed = seed.public();
            self.users.push(SimUser { index: party as usize, credential, seed, mkhe });
            self.client_ms.push(0.0);
            match self.fold_once(&[party as usize])? {
                Ok(f) => self.settle(f)?,
                Err(_) => return Err(ScenarioError::Invalid("duplicate replay failed to fold".into())),
            }
        }
        Ok(())
    }

    fn soul_address(&mut self) -> String {
        format!("0x{}", hex::encode(self.rng.gen::<[u8; 20]>()))
    }

    /// Phase V for every admitted original user.
    fn provision(&mut self) -> Result<(), ScenarioError> {
        let registry: Vec<_> = self.chain.state.phc_registry.values().copied().collect();
        for idx in 0..self.s.n {
            let (hash, pk) = (self.users[idx].credential.hash_phc, self.users[idx].credential.pk_seed);
            if self.chain.state.phc_registry.get(&hash) != Some(&pk) {
                continue;
            }
            let binds = if self.s.user_faults(idx + 1).contains(&FaultKind::Rebind) { 2 } else { 1 };
            for _ in 0..binds {
                let (ring, pos) = select_ring(&registry, pk, self.s.ring, &mut self.rng)?;
                let addr = self.soul_address();
                let signature = lrs_sign(&soul_message(&addr), &ring, pos, &self.users[idx].seed, &mut self.rng)?;
                self.chain.submit(Transaction::Bind { signature, ring, soul_address: addr });
            }
        }
        self.chain.drain();
        Ok(())
    }

    fn finish(self) -> Result<RunOutput, ScenarioError> {
        let s = self.s;
        let state = &self.chain.state;
        let users: Vec<UserOutcome> = self.users[..s.n]
            .iter()
            .map(|u| UserOutcome {
                user: u.index,
                faults: s.user_faults(u.index).into_iter().collect(),
                admitted: state.phc_registry.get(&u.credential.hash_phc) == Some(&u.credential.pk_seed),
                provisioned: state.soul_registry.contains_key(&u.seed.key_image()),
                excluded: self.excluded.get(&u.index).cloned(),
            })
            .collect();
        let receipts = self.chain.receipts().to_vec();
        let settlement_total: u64 = receipts.iter().filter(|r| r.accepted && r.kind == "settle").map(|r| r.gas).sum();
        let provisioning_total: u64 = receipts.iter().filter(|r| r.accepted && r.kind == "bind").map(|r| r.gas).sum();
        let admitted = users.iter().filter(|u| u.admitted).count();
        let provisioned = users.iter().filter(|u| u.provisioned).count();
        let per_user = mlsags_gas(s.ring, &s.model)?;
        let amortized_measured =
            if admitted == 0 { 0.0 } else { (settlement_total + provisioning_total) as f64 / admitted as f64 };
        let mut ring_model = s.model.clone();
        ring_model.c_state_update = per_user;
        let amortized_model = to_f64(amortized_cost(s.n as u64, &ring_model)?);
        let settled: Vec<&BatchReport> = self.batches.iter().filter(|b| b.outcome == "settled").collect();
        let steps: Vec<f64> = settled.iter().filter(|b| b.fold_steps > 0).map(|b| b.fold_step_ms_avg).collect();
        let metrics = RunMetrics {
            n: s.n,
            ring: s.ring,
            backend: s.backend,
            seed: s.seed,
            timings: Timings {
                client_generate_ms_max: self.client_ms.iter().copied().fold(0.0, f64::max),
                fold_step_ms_avg: if steps.is_empty() { 0.0 } else { steps.iter().sum::<f64>() / steps.len() as f64 },
                fuse_ms_total: settled.iter().map(|b| b.fuse_ms).sum(),
                finalize_ms_total: settled.iter().map(|b| b.finalize_ms).sum(),
                chain_seconds: self.chain.elapsed_seconds(),
            },
            gas: GasReport {
                settlement_total,
                provisioning_total,
                provisioning_per_user: per_user,
                amortized_measured,
                amortized_model,
                total_used: state.gas_used,
            },
            admitted,
            provisioned,
            rejections: receipts
                .iter()
                .filter_map(|r| r.reason.as_ref().map(|reason| (r.kind.clone(), reason.clone())))
                .collect(),
            transcript_digests: self.transcript_digests,
            ledger_digest: state.digest().to_hex(),
            users,
            batches: self.batches,
        };
        Ok(RunOutput {
            metrics,
            ledger_snapshot: state.snapshot(),
            tx_log: self.chain.log_jsonl(),
            receipts,
            store: self.store,
            transcripts: self.transcripts,
        })
    }
}

/// Runs a scenario end to end. Protocol outputs are a function of the
/// scenario alone; only timings vary between runs.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput, ScenarioError> {
    let mut r = Runner::new(s)?;
    r.generate_users()?;
    r.run_batches()?;
    r.replay_duplicates()?;
    r.provision()?;
    r.finish()
}

/// One row of the batch-size cost curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "C_total_baseline")]
    pub c_total_baseline: u128,
    pub settlement_gas_per_batch: u64,
    #[serde(rename = "C_user")]
    pub c_user: f64,
    pub cap_per_block: f64,
    pub cap_per_second: f64,
}

pub fn cost_curve(model: &GasModel, n_max: u64) -> Result<Vec<CostRow>, LedgerError> {
    (1..=n_max)
        .map(|n| {
            let cap = capacity(n, model)?;
            Ok(CostRow {
                n,
                c_total_baseline: baseline_cost(n, model),
                settlement_gas_per_batch: model.settlement_gas(),
                c_user: to_f64(amortized_cost(n, model)?),
                cap_per_block: to_f64(cap.per_block),
                cap_per_second: to_f64(cap.per_second),
            })
        })
        .collect()
}

/// Writes rows as CSV with a header line. `None` becomes an empty cell.
pub fn write_csv<T: Serialize>(out: impl std::io::Write, rows: &[T]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| ScenarioError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| ScenarioError::Io(e.to_string()))
}

/// One row of the ring-size curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RingRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub signing_ms_model: Option<f64>,
    pub verify_gas_model: u64,
    pub signing_ms_measured: Option<f64>,
}

/// Ring-size curve for `1..=l_max`. With `measure_reps > 0`, also times
/// local signing, averaged over that many signatures.
pub fn ring_curve(model: &GasModel, l_max: usize, measure_reps: usize, seed: u64) -> Result<Vec<RingRow>, ScenarioError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let keys: Vec<SeedKeyPair> = (0..l_max).map(|_| SeedKeyPair::generate(&mut rng)).collect();
    let pks: Vec<_> = keys.iter().map(|k| k.public()).collect();
    (1..=l_max)
        .map(|l| {
            let signing_ms_measured = if measure_reps == 0 {
                None
            } else {
                let start = Instant::now();
                for rep in 0..measure_reps {
                    lrs_sign(b"ring-curve", &pks[..l], rep % l, &keys[rep % l], &mut rng)?;
                }
                Some(ms(start) / measure_reps as f64)
            };
            Ok(RingRow {
                l,
                signing_ms_model: model.signing_ms_model(l),
                verify_gas_model: mlsags_gas(l, model)?,
                signing_ms_measured,
            })
        })
        .collect()
}

/// Digest over the protocol outputs of a run, excluding timings.
pub fn protocol_digest(out: &RunOutput) -> Digest32 {
    let mut h = crate::encoding::Hasher::new(crate::encoding::Domain::Snapshot);
    h.field(&out.ledger_snapshot);
    for d in &out.metrics.transcript_digests {
        h.field(d.as_bytes());
    }
    h.field(out.tx_log.as_bytes());
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, ring: usize, seed: u64) -> Scenario {
        let mut s = Scenario::new(n, ring, Backend::Transparent, seed);
        s.relation = RelationKind::Synthetic;
        s.ring_dim = 16;
        s
    }

    #[test]
    fn fault_plan_parsing() {
        let plan = parse_fault_plan("# comment\n2 bad-witness\n\n1 pbs-stall # trailing\n").unwrap();
        assert_eq!(
            plan,
            vec![Fault { step: 2, kind: FaultKind::BadWitness }, Fault { step: 1, kind: FaultKind::PbsStall }]
        );
        assert!(parse_fault_plan("0 rebind").is_err());
        assert!(parse_fault_plan("1 explode").is_err());
        assert!(parse_fault_plan("1").is_err());
    }

    #[test]
    fn honest_synthetic_run() {
        let out = run_scenario(&synthetic(3, 4, 1)).unwrap();
        let m = &out.metrics;
        assert!(m.success());
        assert_eq!((m.admitted, m.provisioned), (3, 3));
        assert!(m.rejections.is_empty());
        assert_eq!(out.transcripts.len(), 1);
        let t: FoldTranscript = out.store.get_decoded(&out.transcripts[0]).unwrap();
        assert!(t.replay().is_ok());
        assert_eq!(t.digest().to_hex(), m.transcript_digests[0]);
    }

    #[test]
    fn bad_witness_is_excluded() {
        let mut s = synthetic(3, 3, 2);
        s.faults = vec![Fault { step: 2, kind: FaultKind::BadWitness }];
        let m = run_scenario(&s).unwrap().metrics;
        assert!(m.success());
        assert_eq!(m.admitted, 2);
        assert!(!m.users[1].admitted);
        assert_eq!(m.users[1].excluded.as_deref(), Some("unsatisfying contribution"));
    }

    #[test]
    fn withheld_share_restarts_without_party() {
        let mut s = synthetic(3, 3, 3);
        s.faults = vec![Fault { step: 3, kind: FaultKind::WithholdShare }];
        let m = run_scenario(&s).unwrap().metrics;
        assert!(m.success());
        assert_eq!(m.admitted, 2);
        assert_eq!(m.users[2].excluded.as_deref(), Some("withheld decryption shares"));
    }

    #[test]
    fn stall_requeues_and_duplicate_and_rebind_are_rejected() {
        let mut s = synthetic(2, 3, 4);
        s.faults = vec![
            Fault { step: 1, kind: FaultKind::PbsStall },
            Fault { step: 1, kind: FaultKind::DuplicatePhc },
            Fault { step: 2, kind: FaultKind::Rebind },
        ];
        let out = run_scenario(&s).unwrap();
        let m = &out.metrics;
        assert!(m.success());
        assert_eq!((m.admitted, m.provisioned), (2, 2));
        assert!(m.batches.iter().any(|b| b.outcome.starts_with("expired")));
        assert!(m.timings.chain_seconds > s.t_sub_blocks * s.model.block_period_seconds);
        assert_eq!(m.rejections_with("Already registered"), 1);
        assert_eq!(m.rejections_with("Already provisioned"), 1);
    }

    #[test]
    fn same_seed_same_protocol_outputs() {
        let a = run_scenario(&synthetic(2, 2, 5)).unwrap();
        let b = run_scenario(&synthetic(2, 2, 5)).unwrap();
        assert_eq!(a.ledger_snapshot, b.ledger_snapshot);
        assert_eq!(protocol_digest(&a), protocol_digest(&b));
        let c = run_scenario(&synthetic(2, 2, 6)).unwrap();
        assert_ne!(protocol_digest(&a), protocol_digest(&c));
    }

    #[test]
    fn curves() {
        let m = GasModel::default();
        let rows = cost_curve(&m, 64).unwrap();
        assert_eq!(rows[0].c_user, 1_242_623.0);
        assert!(rows.iter().all(|r| r.settlement_gas_per_batch == 577_720));
        let ring = ring_curve(&m, 12, 0, 0).unwrap();
        assert_eq!(ring[10].verify_gas_model, 664_903);
        assert!(ring[10].signing_ms_measured.is_none());
    }
}
