//! Acceptance suite. Runs as a plain binary and prints one line per
//! criterion; exits nonzero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use admission::algebra::Fp;
use admission::encoding::Encode;
use admission::ledger::{
    amortized_cost, amortized_limit, capacity, capacity_limit, mlsags_gas, to_f64, BatchSubmission, GasModel,
    LedgerState, Reject,
};
use admission::mkhe::Backend;
use admission::mlsags::{lrs_link, lrs_sign, lrs_verify, KeyImage, PublicKey, SeedKeyPair};
use admission::nifs::{fold_plain, fold_unchecked, FoldContext};
use admission::pbs::{assemble_submission, finalize, padding_fold, Clause, PbsError, ProofSystem, SettlementProof, SettlementStatement};
use admission::relation::{check_c1, commit_cross_term, generate_unchecked, CommittedRelaxedWitness};
use admission::scenario::{
    cost_curve, parse_fault_plan, protocol_digest, ring_curve, run_scenario, write_csv, RelationKind, Scenario,
};
use common::{credentials, encrypted_batch, members, plain_chain, Fixture};
use curve25519_dalek::Scalar;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Default commitment ring dimension.
const RING_DIM: usize = 64;
const ORACLE_SEEDS: u64 = 20;
const ORACLE_SIZES: [usize; 5] = [1, 2, 3, 4, 8];
const ORACLE_BUDGET: Duration = Duration::from_secs(300);
/// Constraint count of the synthetic relation used for the RLWE sweep.
const SYNTHETIC_CONSTRAINTS: usize = 16;
const CORRUPTION_TRIALS: u64 = 1_000;
const PHC_CORRUPTION_TRIALS: u64 = 50;
const SUITE_SIZE: usize = 1_000;

const C_USER_1: u128 = 1_242_623;
const CAP_1: f64 = 24.14;
const CAP_1_TOL: f64 = 0.01;
const CAP_64: f64 = 44.5;
const CAP_64_TOL: f64 = 0.1;
const CAP_LIMIT: f64 = 45.1;
const CAP_LIMIT_TOL: f64 = 0.1;
const MLSAGS_11: u64 = 664_903;
const MLSAGS_SLOPE: u64 = 57_000;
/// Smallest `N` with `C_user(N)` within 1% of the limit.
const ONE_PERCENT_N: u64 = 87;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn profile() -> GasModel {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../profiles/paper-testnet.cfg");
    GasModel::load(path).expect("shipped profile loads")
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let phc = Fixture::phc(RING_DIM);
    let synthetic = Fixture::synthetic(1, SYNTHETIC_CONSTRAINTS, RING_DIM);
    let mut runs = 0;
    for (backend, fix) in [(Backend::Transparent, &phc), (Backend::RlweToy, &synthetic)] {
        for seed in 0..ORACLE_SEEDS {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let all = members(fix, backend, *ORACLE_SIZES.iter().max().unwrap(), &mut rng);
            for n in ORACLE_SIZES {
                let ms = &all[..n];
                let ctx = fix.ctx(&credentials(ms), seed);
                let fused = encrypted_batch(fix, ms, &ctx, seed);
                let (inst, wit, _) = plain_chain(fix, ms, &ctx);
                let tag = || format!("{backend} N={n} seed={seed}");
                ensure(fused.instance.x == inst.x, || format!("x differs at {}", tag()))?;
                ensure(fused.instance.u == inst.u, || format!("u differs at {}", tag()))?;
                ensure(fused.witness.e == wit.e, || format!("E differs at {}", tag()))?;
                ensure(fused.witness.r_e == wit.r_e, || format!("r_E differs at {}", tag()))?;
                ensure(fused.witness.w == wit.w, || format!("W differs at {}", tag()))?;
                ensure(fused.witness.r_w == wit.r_w, || format!("r_W differs at {}", tag()))?;
                ensure(fused.instance == inst, || format!("commitments differ at {}", tag()))?;
                runs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < ORACLE_BUDGET, || format!("{runs} batches took {elapsed:.1?}, budget {ORACLE_BUDGET:?}"))?;
    Ok(format!("{runs} batches exact over x, u, E, r_E, W, r_W in {elapsed:.1?}"))
}

/// Replaces one witness entry. With `recommit` the commitment follows the
/// bad witness; otherwise the honest commitment is kept.
fn corrupt(
    fix: &Fixture,
    rng: &mut ChaCha20Rng,
    recommit: bool,
) -> (admission::relation::CommittedRelaxedInstance, CommittedRelaxedWitness) {
    let (x, mut w) = fix.assignment(rng);
    let (inst, wit) = generate_unchecked(&fix.shape, &x, &w, &fix.keys, rng).unwrap();
    let j = rng.gen_range(0..w.len());
    let delta = loop {
        let d = Fp::random(rng);
        if !d.is_zero() {
            break d;
        }
    };
    w[j] += delta;
    if recommit {
        generate_unchecked(&fix.shape, &x, &w, &fix.keys, rng).unwrap()
    } else {
        (inst, CommittedRelaxedWitness { w, ..wit })
    }
}

fn folding_soundness() -> Outcome {
    let phc = Fixture::phc(RING_DIM);
    let mut honest = 0;
    for n in 1..=8 {
        for seed in 0..3u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(100 + seed);
            let ms = members(&phc, Backend::Transparent, n, &mut rng);
            let ctx = phc.ctx(&credentials(&ms), seed);
            let batch = encrypted_batch(&phc, &ms, &ctx, seed);
            ensure(check_c1(&phc.shape, &batch.instance, &batch.witness, &phc.keys), || {
                format!("honest batch N={n} seed={seed} fails C1")
            })?;
            let fold = padding_fold(&phc.shape, &phc.keys, &batch, phc.system.pad(), &ctx).unwrap();
            ensure(check_c1(&phc.shape, &fold.instance, &fold.witness, &phc.keys), || {
                format!("padded batch N={n} seed={seed} fails C1")
            })?;
            honest += 1;
        }
    }

    let synthetic = Fixture::synthetic(2, SYNTHETIC_CONSTRAINTS, RING_DIM);
    let mut trials = 0;
    let mut accepted = 0;
    for (fix, count) in [(&synthetic, CORRUPTION_TRIALS), (&phc, PHC_CORRUPTION_TRIALS)] {
        for t in 0..count {
            let mut rng = ChaCha20Rng::seed_from_u64(10_000 + t);
            let (x, w) = fix.assignment(&mut rng);
            let good = admission::relation::client_generate(&fix.shape, &x, &w, &fix.keys, &mut rng).unwrap();
            let bad = corrupt(fix, &mut rng, t % 2 == 0);
            // A fresh batch id resamples the challenge on every trial.
            let ctx = FoldContext::new(1, t, admission::encoding::Digest32([t as u8; 32]));
            let r_t = fix.keys.t.random_randomness(&mut rng);
            let (acc, new) = if t % 4 < 2 { (&good, &bad) } else { (&bad, &good) };
            let out =
                fold_unchecked(&fix.shape, &fix.keys, (&acc.0, &acc.1), (&new.0, &new.1), &ctx, 2, &r_t).unwrap();
            if check_c1(&fix.shape, &out.instance, &out.witness, &fix.keys) {
                accepted += 1;
            }
            trials += 1;
        }
    }
    ensure(accepted == 0, || format!("{accepted} of {trials} corrupted folds satisfied C1"))?;
    Ok(format!("{honest}/{honest} honest batches satisfy C1; 0/{trials} corrupted folds accepted"))
}

fn end_to_end() -> Outcome {
    let mut details = Vec::new();
    for backend in [Backend::Transparent, Backend::RlweToy] {
        let out = run_scenario(&Scenario::new(4, 11, backend, 7)).map_err(|e| e.to_string())?;
        let m = &out.metrics;
        ensure(m.success() && m.admitted == 4 && m.provisioned == 4 && m.rejections.is_empty(), || {
            format!("{backend}: admitted {} provisioned {} rejections {:?}", m.admitted, m.provisioned, m.rejections)
        })?;
        details.push(format!("{backend} 4/4"));
    }

    let mut s = Scenario::new(4, 11, Backend::Transparent, 8);
    s.faults = parse_fault_plan("2 duplicate-phc\n3 rebind\n").unwrap();
    let out = run_scenario(&s).map_err(|e| e.to_string())?;
    let m = &out.metrics;
    ensure(m.success() && m.admitted == 4 && m.provisioned == 4, || {
        format!("faulted run: admitted {} provisioned {}", m.admitted, m.provisioned)
    })?;
    let registered = m.rejections_with(Reject::AlreadyRegistered.message());
    let provisioned = m.rejections_with(Reject::AlreadyProvisioned.message());
    ensure(registered == 1 && provisioned == 1, || format!("rejections {:?}", m.rejections))?;
    ensure(m.rejections.len() == 2, || format!("unexpected rejections {:?}", m.rejections))?;
    Ok(format!(
        "{}; duplicate PHC -> \"{}\", rebind -> \"{}\"",
        details.join(", "),
        Reject::AlreadyRegistered,
        Reject::AlreadyProvisioned
    ))
}

fn cost_numbers() -> Outcome {
    let m = profile();
    let c1 = amortized_cost(1, &m).unwrap();
    ensure(c1 == Ratio::from_integer(C_USER_1), || format!("C_user(1) = {c1}"))?;
    let cap1 = to_f64(capacity(1, &m).unwrap().per_block);
    ensure((cap1 - CAP_1).abs() <= CAP_1_TOL, || format!("cap(1) = {cap1}"))?;
    let cap64 = to_f64(capacity(64, &m).unwrap().per_block);
    ensure((cap64 - CAP_64).abs() <= CAP_64_TOL, || format!("cap(64) = {cap64}"))?;
    let lim = to_f64(capacity_limit(&m).per_block);
    ensure((lim - CAP_LIMIT).abs() <= CAP_LIMIT_TOL, || format!("cap limit = {lim}"))?;
    let g11 = mlsags_gas(11, &m).unwrap();
    ensure(g11 == MLSAGS_11, || format!("mlsags_gas(11) = {g11}"))?;
    let slopes: Vec<u64> = (1..32).map(|l| mlsags_gas(l + 1, &m).unwrap() - mlsags_gas(l, &m).unwrap()).collect();
    ensure(slopes.iter().all(|s| *s == MLSAGS_SLOPE), || format!("slopes {slopes:?}"))?;
    Ok(format!(
        "C_user(1) = {c1}, cap(1) = {cap1:.4}, cap(64) = {cap64:.3}, limit = {lim:.3}, mlsags_gas(11) = {g11}, slope = {MLSAGS_SLOPE}"
    ))
}

fn amortization() -> Outcome {
    let m = profile();
    let limit = amortized_limit(&m);
    let costs: Vec<_> = (1..=10_000u64).map(|n| amortized_cost(n, &m).unwrap()).collect();
    ensure(costs.windows(2).all(|w| w[1] < w[0]), || "C_user is not strictly decreasing".into())?;
    let within = |c: &Ratio<u128>| (*c - limit) * Ratio::from_integer(100) < limit;
    let first = costs.iter().position(within).map(|i| i as u64 + 1);
    ensure(first == Some(ONE_PERCENT_N), || format!("first N within 1% is {first:?}"))?;
    ensure(costs[ONE_PERCENT_N as usize - 1..].iter().all(within), || "leaves the 1% band".into())?;
    Ok(format!("strictly decreasing on 1..=10000; within 1% of {limit} from N = {ONE_PERCENT_N}"))
}

fn baseline_contrast() -> Outcome {
    let m = profile();
    let mut csv = Vec::new();
    write_csv(&mut csv, &cost_curve(&m, 64).unwrap()).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_slice());
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| format!("missing column {name}"));
    let (n_col, base_col, settle_col) = (col("N")?, col("C_total_baseline")?, col("settlement_gas_per_batch")?);
    let rows: Vec<(u128, u128, u128)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[n_col].parse().unwrap(), r[base_col].parse().unwrap(), r[settle_col].parse().unwrap())
        })
        .collect();
    ensure(rows.len() == 64, || format!("{} rows", rows.len()))?;
    let per_user = rows[0].1;
    ensure(rows.iter().all(|(n, b, _)| *b == n * per_user), || "baseline is not N times C_total(1)".into())?;
    ensure(rows.iter().all(|(_, _, s)| *s == rows[0].2), || "settlement gas varies with N".into())?;
    let rings = ring_curve(&m, 16, 0, 0).map_err(|e| e.to_string())?;
    ensure(rings[10].verify_gas_model == MLSAGS_11, || "ring curve L = 11".into())?;
    Ok(format!(
        "baseline = N x {per_user} for N in 1..=64; settlement constant at {} per batch",
        rows[0].2
    ))
}

fn mlsags_suite() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let pool: Vec<SeedKeyPair> = (0..64).map(|_| SeedKeyPair::generate(&mut rng)).collect();
    let pks: Vec<PublicKey> = pool.iter().map(|k| k.public()).collect();
    let random_ring = |rng: &mut ChaCha20Rng, signer: usize, size: usize| {
        let mut idx: Vec<usize> = (0..pool.len()).filter(|i| *i != signer).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(rng);
        idx.truncate(size - 1);
        let pos = rng.gen_range(0..size);
        idx.insert(pos, signer);
        (idx.iter().map(|i| pks[*i]).collect::<Vec<_>>(), pos)
    };

    for _ in 0..SUITE_SIZE {
        let signer = rng.gen_range(0..pool.len());
        let size = rng.gen_range(1..=16);
        let (ring, pos) = random_ring(&mut rng, signer, size);
        let msg: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
        let sig = lrs_sign(&msg, &ring, pos, &pool[signer], &mut rng).map_err(|e| e.to_string())?;
        ensure(lrs_verify(&msg, &ring, &sig), || format!("honest signature rejected (L = {size})"))?;
    }

    let mut images = std::collections::BTreeSet::new();
    for _ in 0..SUITE_SIZE {
        let kp = SeedKeyPair::generate(&mut rng);
        let mut keys: Vec<PublicKey> = pks[..10].to_vec();
        keys.push(kp.public());
        let a = lrs_sign(b"first", &keys, 10, &kp, &mut rng).unwrap();
        keys.swap(0, 10);
        let b = lrs_sign(b"second", &keys[..6], 0, &kp, &mut rng).unwrap();
        ensure(a.y0 == b.y0 && a.y0 == kp.key_image() && lrs_link(&a, &b), || "same key, different images".into())?;
        images.insert(a.y0);
    }
    ensure(images.len() == SUITE_SIZE, || "distinct keys share a key image".into())?;

    let mut forged = 0;
    let other_image: KeyImage = pool[0].key_image();
    for t in 0..SUITE_SIZE {
        let signer = 1 + rng.gen_range(0..pool.len() - 1);
        let (ring, pos) = random_ring(&mut rng, signer, 11);
        let msg = b"soul-binding".to_vec();
        let sig = lrs_sign(&msg, &ring, pos, &pool[signer], &mut rng).unwrap();
        let (mut m2, mut r2, mut s2) = (msg.clone(), ring.clone(), sig.clone());
        let k = rng.gen_range(0..ring.len());
        match t % 7 {
            0 => s2.c0 += Scalar::ONE,
            1 => s2.responses[k] += Scalar::ONE,
            2 => s2.y0 = if sig.y0 == other_image { pool[1].key_image() } else { other_image },
            3 => {
                let outsider = pks.iter().find(|p| !ring.contains(p)).unwrap();
                r2[k] = *outsider;
            }
            4 => m2.push(0),
            5 => s2.ring_digest.0[k % 32] ^= 1,
            _ => {
                s2.responses.pop();
            }
        }
        if lrs_verify(&m2, &r2, &s2) {
            forged += 1;
        }
    }
    ensure(forged == 0, || format!("{forged} forged signatures accepted"))?;
    Ok(format!("{SUITE_SIZE} signatures verify; {SUITE_SIZE} keys link; 0/{SUITE_SIZE} mutations accepted"))
}

fn settle_batch(fix: &Fixture, seed: u64, n: usize) -> BatchSubmission {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ms = members(fix, Backend::Transparent, n, &mut rng);
    let creds = credentials(&ms);
    let ctx = fix.ctx(&creds, seed);
    let batch = encrypted_batch(fix, &ms, &ctx, seed);
    let (statement, proof) = finalize(&fix.system, &batch, &ctx).unwrap();
    assemble_submission(&fix.system.verifying_key(), statement, proof, &creds).unwrap()
}

fn pbs_suite() -> Outcome {
    let fix = Fixture::phc(RING_DIM);
    let model = GasModel::default();
    let a = settle_batch(&fix, 1, 4);
    let b = settle_batch(&fix, 2, 4);

    let mut honest = LedgerState::default();
    ensure(honest.verifier_submit(&a, &fix.system, &model).accepted(), || "honest batch rejected".into())?;

    let mut forgeries: Vec<(&str, BatchSubmission)> = Vec::new();
    for i in 0..3 {
        let mut s = a.clone();
        s.x.swap(i, i + 1);
        forgeries.push(("reorder X", s));
    }
    let mut s = a.clone();
    s.x.reverse();
    forgeries.push(("reorder X", s));
    for i in 0..4 {
        let mut s = a.clone();
        s.x.remove(i);
        forgeries.push(("drop user", s));
    }

    // The fixed pad makes the honest `T_bar` the zero commitment, so any
    // nonzero commitment is an alteration.
    ensure(a.statement.t_bar.is_zero() && b.statement.t_bar.is_zero(), || "honest T_bar is not zero".into())?;
    let mut rng = ChaCha20Rng::seed_from_u64(98);
    let mut s = a.clone();
    let t: Vec<Fp> = (0..fix.shape.num_constraints()).map(|_| Fp::random(&mut rng)).collect();
    s.statement.t_bar = commit_cross_term(&fix.keys, &t, &fix.keys.t.random_randomness(&mut rng)).unwrap();
    forgeries.push(("alter T_bar", s.clone()));
    let mut s2 = a.clone();
    s2.statement.t_bar = commit_cross_term(&fix.keys, &t, &fix.keys.t.zero_randomness()).unwrap();
    forgeries.push(("alter T_bar", s2));
    let refused = fix.system.prove(&s.statement, &fix.system.pad().instance, &honest_padded_witness(&fix, 1));
    ensure(matches!(refused, Err(PbsError::ProofRefused(_))), || "altered T_bar was proven".into())?;

    // Pad with a real, satisfying credential instead of the fixed zero pair.
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let (rogue, _) = fix.credential(&mut rng);
    let batch = {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ms = members(&fix, Backend::Transparent, 4, &mut rng);
        encrypted_batch(&fix, &ms, &a.statement.ctx, 1)
    };
    let r_t = fix.keys.t.zero_randomness();
    let out = fold_plain(
        &fix.shape,
        &fix.keys,
        (&batch.instance, &batch.witness),
        (&rogue.instance, &rogue.witness),
        &a.statement.ctx,
        5,
        &r_t,
    )
    .unwrap();
    let statement = SettlementStatement {
        ctx: a.statement.ctx.clone(),
        step: 5,
        acc_n: batch.instance.clone(),
        t_bar: out.cross_term.t_bar.clone(),
        acc_n1: out.instance.clone(),
    };
    ensure(
        fix.system.prove(&statement, &rogue.instance, &out.witness) == Err(PbsError::ProofRefused(Clause::FixedPadding)),
        || "non-canonical pad was proven".into(),
    )?;
    let mut payload = statement.digest().to_bytes();
    rogue.instance.encode_to(&mut payload);
    out.witness.encode_to(&mut payload);
    let proof = SettlementProof { backend: a.proof.backend, payload };
    forgeries.push(("non-canonical pad", BatchSubmission { x: a.x.clone(), statement, proof }));

    forgeries.push((
        "swap statements",
        BatchSubmission { x: a.x.clone(), statement: b.statement.clone(), proof: b.proof.clone() },
    ));
    forgeries.push((
        "swap statements",
        BatchSubmission { x: a.x.clone(), statement: b.statement.clone(), proof: a.proof.clone() },
    ));
    forgeries.push((
        "swap statements",
        BatchSubmission { x: a.x.clone(), statement: a.statement.clone(), proof: b.proof.clone() },
    ));

    let mut accepted = Vec::new();
    for (name, sub) in &forgeries {
        let mut ledger = LedgerState::default();
        let before = ledger.phc_registry.clone();
        let outcome = ledger.verifier_submit(sub, &fix.system, &model);
        if outcome.accepted() || ledger.phc_registry != before {
            accepted.push(*name);
        }
        if outcome.result != Err(Reject::VerificationFailed) {
            accepted.push(*name);
        }
    }
    ensure(accepted.is_empty(), || format!("accepted forgeries: {accepted:?}"))?;
    Ok(format!(
        "{} forgeries over reorder X, drop user, alter T_bar, non-canonical pad, swap statements; 0 accepted",
        forgeries.len()
    ))
}

/// Padded witness of the honest batch built by `settle_batch(fix, seed, 4)`.
fn honest_padded_witness(fix: &Fixture, seed: u64) -> CommittedRelaxedWitness {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let ms = members(fix, Backend::Transparent, 4, &mut rng);
    let ctx = fix.ctx(&credentials(&ms), seed);
    let batch = encrypted_batch(fix, &ms, &ctx, seed);
    padding_fold(&fix.shape, &fix.keys, &batch, fix.system.pad(), &ctx).unwrap().witness
}

fn determinism() -> Outcome {
    let mut faulted = Scenario::new(4, 11, Backend::Transparent, 21);
    faulted.faults =
        parse_fault_plan("1 pbs-stall\n2 bad-witness\n3 duplicate-phc\n4 rebind\n").unwrap();
    let mut rlwe = Scenario::new(3, 5, Backend::RlweToy, 22);
    rlwe.relation = RelationKind::Synthetic;
    rlwe.faults = parse_fault_plan("2 withhold-share\n").unwrap();
    let mut checked = 0;
    for s in [Scenario::new(4, 11, Backend::Transparent, 20), faulted, rlwe] {
        let a = run_scenario(&s).map_err(|e| e.to_string())?;
        let b = run_scenario(&s).map_err(|e| e.to_string())?;
        ensure(a.ledger_snapshot == b.ledger_snapshot, || format!("seed {}: snapshots differ", s.seed))?;
        ensure(a.metrics.transcript_digests == b.metrics.transcript_digests, || {
            format!("seed {}: transcript digests differ", s.seed)
        })?;
        ensure(a.tx_log == b.tx_log, || format!("seed {}: transaction logs differ", s.seed))?;
        ensure(protocol_digest(&a) == protocol_digest(&b), || format!("seed {}: protocol digests differ", s.seed))?;
        checked += 1;
    }
    Ok(format!("{checked} scenario pairs byte-identical (snapshot, transcripts, tx log)"))
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, fn() -> Outcome); 9] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "folding completeness and soundness", folding_soundness),
        (3, "end-to-end admission", end_to_end),
        (4, "cost model numbers", cost_numbers),
        (5, "amortization", amortization),
        (6, "baseline contrast", baseline_contrast),
        (7, "ring signature suite", mlsags_suite),
        (8, "settlement forgery suite", pbs_suite),
        (9, "determinism", determinism),
    ];
    let filter: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, check) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
