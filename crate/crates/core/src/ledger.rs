//! Deterministic chain-side state: the batch verifier contract, the soul
//! registry contract, symbolic gas metering, and the cost/capacity model.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::Fp;
use crate::encoding::{put_bytes, put_u64, Digest32, Domain, Encode, Hasher, FORMAT_VERSION};
use crate::mlsags::{lrs_verify, KeyImage, PublicKey, RingSignature};
use crate::nifs::input_digest;
use crate::pbs::{SettlementProof, SettlementStatement, ProofSystem};

/// Exact gas arithmetic.
pub type Gas = Ratio<u128>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
    #[error("ring size must be at least 1")]
    InvalidRingSize,
    #[error("profile: {0}")]
    Profile(String),
}

/// Symbolic gas table plus the client-side signing-time model. Field names
/// are the profile keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasModel {
    /// Verifying one folded batch proof, including settlement overhead.
    pub c_verify_folded: u64,
    /// Settlement overhead beyond `c_verify_folded`; the shipped profile
    /// already merges it into `c_verify_folded`.
    #[serde(default)]
    pub c_overhead: u64,
    /// Per-admitted-user chain-side cost in the amortized model.
    pub c_state_update: u64,
    pub c_mlsags_base: u64,
    pub c_mlsags_per_member: u64,
    /// Non-recursive baseline: one proof verification per user.
    pub c_verify: u64,
    /// Non-recursive baseline: per-user storage.
    pub c_store: u64,
    pub block_gas_budget: u64,
    pub block_period_seconds: u64,
    /// Recommended ring size.
    #[serde(default = "default_ring_size")]
    pub ring_size: usize,
    /// Signing time at `ring_size`, in milliseconds.
    #[serde(default = "default_signing_ms")]
    pub signing_ms_at_ring_size: f64,
    #[serde(default = "default_signing_slope")]
    pub signing_ms_per_member: f64,
}

fn default_ring_size() -> usize {
    11
}

fn default_signing_ms() -> f64 {
    184.23
}

fn default_signing_slope() -> f64 {
    40.0
}

impl Default for GasModel {
    fn default() -> Self {
        Self {
            c_verify_folded: 577_720,
            c_overhead: 0,
            c_state_update: 664_903,
            c_mlsags_base: 37_903,
            c_mlsags_per_member: 57_000,
            c_verify: 435_150,
            c_store: 44_200,
            block_gas_budget: 30_000_000,
            block_period_seconds: 12,
            ring_size: default_ring_size(),
            signing_ms_at_ring_size: default_signing_ms(),
            signing_ms_per_member: default_signing_slope(),
        }
    }
}

impl GasModel {
    pub fn from_toml(text: &str) -> Result<Self, LedgerError> {
        let m: Self = toml::from_str(text).map_err(|e| LedgerError::Profile(e.to_string()))?;
        if m.block_gas_budget == 0 || m.block_period_seconds == 0 {
            return Err(LedgerError::Profile("block budget and period must be positive".into()));
        }
        if m.c_state_update == 0 && m.c_verify_folded == 0 && m.c_overhead == 0 {
            return Err(LedgerError::Profile("per-user cost is zero".into()));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| LedgerError::Profile(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    /// Linear signing-time model anchored at `ring_size`. `None` where the
    /// line drops to zero or below, which happens for small rings.
    pub fn signing_ms_model(&self, ring_size: usize) -> Option<f64> {
        let ms = self.signing_ms_at_ring_size + self.signing_ms_per_member * (ring_size as f64 - self.ring_size as f64);
        (ms > 0.0).then_some(ms)
    }

    /// Gas charged for a batch settlement transaction.
    pub fn settlement_gas(&self) -> u64 {
        self.c_verify_folded + self.c_overhead
    }
}

/// `C_total(N) = N·(C_verify + C_store)`.
pub fn baseline_cost(n: u64, m: &GasModel) -> u128 {
    n as u128 * (m.c_verify as u128 + m.c_store as u128)
}

/// `C_user(N) = (C_verifyFolded + C_overhead)/N + C_stateUpdate`.
pub fn amortized_cost(n: u64, m: &GasModel) -> Result<Gas, LedgerError> {
    if n == 0 {
        return Err(LedgerError::InvalidBatchSize);
    }
    Ok(Gas::new(m.settlement_gas() as u128, n as u128) + Gas::from_integer(m.c_state_update as u128))
}

/// `lim_{N→∞} C_user(N)`.
pub fn amortized_limit(m: &GasModel) -> Gas {
    Gas::from_integer(m.c_state_update as u128)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capacity {
    pub per_block: Gas,
    pub per_second: Gas,
}

/// `cap(N) = budget / C_user(N)` users per block.
pub fn capacity(n: u64, m: &GasModel) -> Result<Capacity, LedgerError> {
    let per_block = Gas::from_integer(m.block_gas_budget as u128) / amortized_cost(n, m)?;
    Ok(Capacity { per_block, per_second: per_block / Gas::from_integer(m.block_period_seconds as u128) })
}

pub fn capacity_limit(m: &GasModel) -> Capacity {
    let per_block = Gas::from_integer(m.block_gas_budget as u128) / amortized_limit(m);
    Capacity { per_block, per_second: per_block / Gas::from_integer(m.block_period_seconds as u128) }
}

/// `base + L·per_member`.
pub fn mlsags_gas(ring_size: usize, m: &GasModel) -> Result<u64, LedgerError> {
    if ring_size == 0 {
        return Err(LedgerError::InvalidRingSize);
    }
    Ok(m.c_mlsags_base + ring_size as u64 * m.c_mlsags_per_member)
}

pub fn to_f64(g: Gas) -> f64 {
    *g.numer() as f64 / *g.denom() as f64
}

/// A batch settlement: `X` in fold order, the settlement statement and its
/// proof.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchSubmission {
    pub x: Vec<(Fp, PublicKey)>,
    pub statement: SettlementStatement,
    pub proof: SettlementProof,
}

/// Contract rejection reasons, displayed verbatim.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reject {
    VerificationFailed,
    AlreadyRegistered,
    InvalidRing,
    AlreadyProvisioned,
}

impl Reject {
    pub fn message(self) -> &'static str {
        match self {
            Reject::VerificationFailed => "Verification failed",
            Reject::AlreadyRegistered => "Already registered",
            Reject::InvalidRing => "The ring of public keys is invalid",
            Reject::AlreadyProvisioned => "Already provisioned",
        }
    }
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub result: Result<(), Reject>,
    pub gas: u64,
}

impl Outcome {
    pub fn accepted(&self) -> bool {
        self.result.is_ok()
    }
}

/// Message signed when binding a soul address.
pub fn soul_message(soul_address: &str) -> Vec<u8> {
    let mut out = b"admission/soul-binding/v1:".to_vec();
    out.extend_from_slice(soul_address.as_bytes());
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LedgerState {
    pub phc_registry: BTreeMap<Fp, PublicKey>,
    pub soul_registry: BTreeMap<KeyImage, String>,
    pub gas_used: u64,
    pub block_height: u64,
}

impl LedgerState {
    /// Batch verifier contract. Verification runs first; a rejected batch
    /// stores nothing and is charged verification gas only.
    pub fn verifier_submit(&mut self, sub: &BatchSubmission, system: &dyn ProofSystem, m: &GasModel) -> Outcome {
        let verified = !sub.x.is_empty()
            && sub.x.len() as u64 == sub.statement.num_users()
            && input_digest(&system.verifying_key(), &sub.x) == sub.statement.x_digest()
            && system.verify(&sub.statement, &sub.proof);
        if !verified {
            return self.charge(Err(Reject::VerificationFailed), m.c_verify_folded);
        }
        let mut seen = BTreeSet::new();
        let duplicate = sub.x.iter().any(|(h, _)| !seen.insert(*h) || self.phc_registry.contains_key(h));
        if duplicate {
            return self.charge(Err(Reject::AlreadyRegistered), m.c_verify_folded);
        }
        for (h, pk) in &sub.x {
            self.phc_registry.insert(*h, *pk);
        }
        self.charge(Ok(()), m.settlement_gas())
    }

    /// Soul registry contract. Every outcome is charged the ring's
    /// verification gas.
    pub fn soul_register(&mut self, sig: &RingSignature, ring: &[PublicKey], soul_address: &str, m: &GasModel) -> Outcome {
        let gas = mlsags_gas(ring.len().max(1), m).expect("nonzero ring size");
        let registered: BTreeSet<&PublicKey> = self.phc_registry.values().collect();
        if ring.is_empty() || !ring.iter().all(|pk| registered.contains(pk)) {
            return self.charge(Err(Reject::InvalidRing), gas);
        }
        if !lrs_verify(&soul_message(soul_address), ring, sig) {
            return self.charge(Err(Reject::VerificationFailed), gas);
        }
        if self.soul_registry.contains_key(&sig.y0) {
            return self.charge(Err(Reject::AlreadyProvisioned), gas);
        }
        self.soul_registry.insert(sig.y0, soul_address.to_string());
        self.charge(Ok(()), gas)
    }

    fn charge(&mut self, result: Result<(), Reject>, gas: u64) -> Outcome {
        self.gas_used += gas;
        Outcome { result, gas }
    }

    pub fn snapshot(&self) -> Vec<u8> {
        self.to_bytes()
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::Snapshot);
        h.update(&self.snapshot());
        h.finish()
    }
}

impl Encode for LedgerState {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(FORMAT_VERSION);
        put_u64(out, self.phc_registry.len() as u64);
        for (h, pk) in &self.phc_registry {
            h.encode_to(out);
            pk.encode_to(out);
        }
        put_u64(out, self.soul_registry.len() as u64);
        for (y0, addr) in &self.soul_registry {
            y0.encode_to(out);
            put_bytes(out, addr.as_bytes());
        }
        put_u64(out, self.gas_used);
        put_u64(out, self.block_height);
    }
}

#[derive(Clone, Debug)]
pub enum Transaction {
    Settle(Box<BatchSubmission>),
    Bind { signature: RingSignature, ring: Vec<PublicKey>, soul_address: String },
}

impl Transaction {
    pub fn kind(&self) -> &'static str {
        match self {
            Transaction::Settle(_) => "settle",
            Transaction::Bind { .. } => "bind",
        }
    }

    /// Gas this transaction will be charged, used for block packing.
    pub fn gas(&self, m: &GasModel) -> u64 {
        match self {
            Transaction::Settle(_) => m.settlement_gas(),
            Transaction::Bind { ring, .. } => mlsags_gas(ring.len().max(1), m).expect("nonzero ring size"),
        }
    }
}

/// One line of the transaction log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx: u64,
    pub block: u64,
    pub index: u32,
    pub kind: String,
    pub accepted: bool,
    pub reason: Option<String>,
    pub gas: u64,
}

/// Single-threaded chain: a FIFO mempool packed into blocks of bounded gas,
/// one block per simulated period.
pub struct Chain {
    pub state: LedgerState,
    model: GasModel,
    system: Box<dyn ProofSystem>,
    mempool: VecDeque<(u64, Transaction)>,
    receipts: Vec<Receipt>,
    next_tx: u64,
}

impl Chain {
    pub fn new(model: GasModel, system: Box<dyn ProofSystem>) -> Self {
        Self {
            state: LedgerState::default(),
            model,
            system,
            mempool: VecDeque::new(),
            receipts: Vec::new(),
            next_tx: 0,
        }
    }

    pub fn model(&self) -> &GasModel {
        &self.model
    }

    pub fn system(&self) -> &dyn ProofSystem {
        self.system.as_ref()
    }

    pub fn submit(&mut self, tx: Transaction) -> u64 {
        let id = self.next_tx;
        self.next_tx += 1;
        self.mempool.push_back((id, tx));
        id
    }

    pub fn pending(&self) -> usize {
        self.mempool.len()
    }

    /// Includes queued transactions in order while the block budget allows;
    /// the rest wait for the next block. A lone oversized transaction is
    /// included by itself.
    pub fn produce_block(&mut self) -> Vec<Receipt> {
        self.state.block_height += 1;
        let block = self.state.block_height;
        let mut used = 0u64;
        let mut out = Vec::new();
        while let Some((_, tx)) = self.mempool.front() {
            let g = tx.gas(&self.model);
            if !out.is_empty() && used + g > self.model.block_gas_budget {
                break;
            }
            let (id, tx) = self.mempool.pop_front().expect("front exists");
            let outcome = match &tx {
                Transaction::Settle(sub) => self.state.verifier_submit(sub, self.system.as_ref(), &self.model),
                Transaction::Bind { signature, ring, soul_address } => {
                    self.state.soul_register(signature, ring, soul_address, &self.model)
                }
            };
            used += outcome.gas;
            out.push(Receipt {
                tx: id,
                block,
                index: out.len() as u32,
                kind: tx.kind().to_string(),
                accepted: outcome.accepted(),
                reason: outcome.result.err().map(|r| r.message().to_string()),
                gas: outcome.gas,
            });
        }
        self.receipts.extend(out.iter().cloned());
        out
    }

    /// Produces blocks until the mempool drains.
    pub fn drain(&mut self) -> Vec<Receipt> {
        let mut all = Vec::new();
        while !self.mempool.is_empty() {
            all.extend(self.produce_block());
        }
        all
    }

    pub fn receipt(&self, tx: u64) -> Option<&Receipt> {
        self.receipts.iter().find(|r| r.tx == tx)
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn elapsed_seconds(&self) -> u64 {
        self.state.block_height * self.model.block_period_seconds
    }

    pub fn log_jsonl(&self) -> String {
        self.receipts.iter().map(|r| serde_json::to_string(r).expect("receipt serializes") + "\n").collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlsags_linear_model() {
        let m = GasModel::default();
        assert_eq!(mlsags_gas(11, &m).unwrap(), 664_903);
        assert_eq!(mlsags_gas(12, &m).unwrap() - mlsags_gas(11, &m).unwrap(), 57_000);
        assert_eq!(mlsags_gas(1, &m).unwrap(), 94_903);
        assert_eq!(mlsags_gas(0, &m), Err(LedgerError::InvalidRingSize));
        assert_eq!(m.c_state_update, mlsags_gas(m.ring_size, &m).unwrap());
    }

    #[test]
    fn signing_model_anchor_and_slope() {
        let m = GasModel::default();
        assert_eq!(m.signing_ms_model(11), Some(184.23));
        assert!((m.signing_ms_model(12).unwrap() - 224.23).abs() < 1e-9);
        assert_eq!(m.signing_ms_model(6), None);
    }

    #[test]
    fn baseline_is_linear() {
        let m = GasModel::default();
        assert_eq!(baseline_cost(0, &m), 0);
        for n in [1u64, 3, 17, 64] {
            assert_eq!(baseline_cost(2 * n, &m), 2 * baseline_cost(n, &m));
        }
        // 7 · (435,150 + 44,200), evaluated by hand.
        assert_eq!(baseline_cost(7, &m), 3_355_450);
    }

    #[test]
    fn amortized_cost_values() {
        let m = GasModel::default();
        assert_eq!(amortized_cost(1, &m).unwrap(), Gas::from_integer(1_242_623));
        assert_eq!(amortized_cost(0, &m), Err(LedgerError::InvalidBatchSize));
        for n in 1..1024 {
            assert!(amortized_cost(n + 1, &m).unwrap() < amortized_cost(n, &m).unwrap());
        }
        assert_eq!(amortized_limit(&m), Gas::from_integer(664_903));
    }

    #[test]
    fn capacity_times_cost_is_budget() {
        let m = GasModel::default();
        for n in [1u64, 2, 7, 64, 1000] {
            let c = capacity(n, &m).unwrap();
            assert_eq!(c.per_block * amortized_cost(n, &m).unwrap(), Gas::from_integer(30_000_000));
            assert_eq!(c.per_second * Gas::from_integer(12), c.per_block);
        }
        assert!((to_f64(capacity(1, &m).unwrap().per_block) - 24.14).abs() < 0.01);
        assert!((to_f64(capacity(1, &m).unwrap().per_second) - 2.01).abs() < 0.01);
        assert!((to_f64(capacity(64, &m).unwrap().per_block) - 44.5).abs() < 0.1);
        assert!((to_f64(capacity_limit(&m).per_block) - 45.1).abs() < 0.1);
    }

    #[test]
    fn profile_parsing() {
        let text = "c_verify_folded = 1\nc_state_update = 2\nc_mlsags_base = 3\nc_mlsags_per_member = 4\n\
                    c_verify = 5\nc_store = 6\nblock_gas_budget = 7\nblock_period_seconds = 8\n";
        let m = GasModel::from_toml(text).unwrap();
        assert_eq!(m.c_overhead, 0);
        assert_eq!(m.block_gas_budget, 7);
        assert!(GasModel::from_toml(&format!("{text}bogus = 1\n")).is_err());
        assert!(GasModel::from_toml("c_verify_folded = 1\n").is_err());
    }

    #[test]
    fn reject_messages_are_verbatim() {
        assert_eq!(Reject::VerificationFailed.to_string(), "Verification failed");
        assert_eq!(Reject::AlreadyRegistered.to_string(), "Already registered");
        assert_eq!(Reject::InvalidRing.to_string(), "The ring of public keys is invalid");
        assert_eq!(Reject::AlreadyProvisioned.to_string(), "Already provisioned");
    }
}
