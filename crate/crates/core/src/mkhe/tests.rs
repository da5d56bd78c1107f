use super::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const N: usize = 16;
const BACKENDS: [Backend; 2] = [Backend::Transparent, Backend::RlweToy];

fn keys(backend: Backend, count: u32, rng: &mut ChaCha20Rng) -> Vec<MkheKeyPair> {
    let params = MkheParams::new(backend, N).unwrap();
    (1..=count).map(|i| keygen(&params, i, rng)).collect()
}

fn random_vec(len: usize, rng: &mut ChaCha20Rng) -> Vec<RingElement> {
    (0..len).map(|_| RingElement::random(N, rng)).collect()
}

fn dec(keys: &[MkheKeyPair], ct: &MultiKeyCiphertext, rng: &mut ChaCha20Rng) -> Vec<RingElement> {
    let refs: Vec<&MkheKeyPair> = keys.iter().collect();
    joint_decrypt(&refs, ct, rng).unwrap()
}

#[test]
fn roundtrip_random_vectors() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let k = keys(backend, 1, &mut rng);
        for _ in 0..100 {
            let m = random_vec(3, &mut rng);
            let ct = encrypt(k[0].public_key(), &m, &mut rng).unwrap();
            assert_eq!(ct.level(), 0);
            assert_eq!(ct.key_set(), &[1]);
            assert_eq!(dec(&k, &ct, &mut rng), m, "{backend}");
        }
    }
}

#[test]
fn zero_vector_and_randomized_payloads() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let k = keys(backend, 1, &mut rng);
        let zero = vec![RingElement::zero(N); 4];
        let c1 = encrypt(k[0].public_key(), &zero, &mut rng).unwrap();
        let c2 = encrypt(k[0].public_key(), &zero, &mut rng).unwrap();
        assert_ne!(c1.to_bytes(), c2.to_bytes());
        assert_eq!(dec(&k, &c1, &mut rng), zero);
    }
}

#[test]
fn empty_plaintext_rejected() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let k = keys(Backend::RlweToy, 1, &mut rng);
    assert!(matches!(encrypt(k[0].public_key(), &[], &mut rng), Err(MkheError::ParamMismatch { .. })));
    let wrong_dim = vec![RingElement::zero(8)];
    assert!(encrypt(k[0].public_key(), &wrong_dim, &mut rng).is_err());
}

#[test]
fn keys_are_fresh_and_rederivable() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let k = keys(backend, 2, &mut rng);
        assert!(k[0].public_key().material != k[1].public_key().material);
        for kp in &k {
            assert_eq!(&kp.derive_public_key(), kp.public_key());
        }
    }
}

#[test]
fn rlwe_public_key_is_small_noise_sample() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let k = keys(Backend::RlweToy, 1, &mut rng);
    let (SkMaterial::Rlwe(sk), PkMaterial::Rlwe(pk)) = (&k[0].sk, &k[0].pk.material) else { unreachable!() };
    assert!(sk.coeffs().iter().all(|c| (-1..=1).contains(c)));
    let ctx = RnsContext::get(N);
    // b + a·s = t·e with small e, so it vanishes mod t.
    let phase = ctx.add(&pk.b, &ctx.mul(&pk.a, &sk.s));
    assert!(ctx.decode_mod_p(&phase).is_zero());
}

#[test]
fn additive_identity_and_unit_scalar() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let k = keys(backend, 1, &mut rng);
        let m = random_vec(5, &mut rng);
        let c = encrypt(k[0].public_key(), &m, &mut rng).unwrap();
        let z = encrypt(k[0].public_key(), &vec![RingElement::zero(N); 5], &mut rng).unwrap();
        assert_eq!(dec(&k, &add(&c, &z).unwrap(), &mut rng), m);
        assert_eq!(dec(&k, &scalar_mul(Fp::ONE, &c).unwrap(), &mut rng), m);
    }
}

#[test]
fn homomorphism_matches_plaintext_ops() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let k = keys(backend, 3, &mut rng);
        for _ in 0..10 {
            let (m1, m2) = (random_vec(4, &mut rng), random_vec(4, &mut rng));
            let c1 = encrypt(k[0].public_key(), &m1, &mut rng).unwrap();
            let c2 = encrypt(k[2].public_key(), &m2, &mut rng).unwrap();
            let s = Fp::random(&mut rng);

            let sum = add(&c1, &c2).unwrap();
            assert_eq!(sum.key_set(), &[1, 3]);
            let want: Vec<_> = m1.iter().zip(&m2).map(|(a, b)| a + b).collect();
            assert_eq!(dec(&k, &sum, &mut rng), want);

            let scaled = eval(EvalOp::ScalarMul, &c1, Operand::Scalar(s)).unwrap();
            assert_eq!(dec(&k, &scaled, &mut rng), m1.iter().map(|a| a.scale(s)).collect::<Vec<_>>());

            let prod = ct_mul(&c1, &c2).unwrap();
            assert_eq!(prod.level(), 1);
            assert_eq!(dec(&k, &prod, &mut rng), m1.iter().zip(&m2).map(|(a, b)| a * b).collect::<Vec<_>>());
        }
    }
}

#[test]
fn hadamard_under_two_keys_over_many_pairs() {
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let k = keys(Backend::RlweToy, 2, &mut rng);
    for _ in 0..100 {
        let a: Vec<Fp> = (0..2).map(|_| Fp::random(&mut rng)).collect();
        let b: Vec<Fp> = (0..2).map(|_| Fp::random(&mut rng)).collect();
        let ca = encrypt_field(k[0].public_key(), &a, &mut rng).unwrap();
        let cb = encrypt_field(k[1].public_key(), &b, &mut rng).unwrap();
        let refs: Vec<&MkheKeyPair> = k.iter().collect();
        let got = joint_decrypt_field(&refs, &ct_mul(&ca, &cb).unwrap(), &mut rng).unwrap();
        assert_eq!(got, vec![a[0] * b[0], a[1] * b[1]]);
    }
}

#[test]
fn same_key_product_uses_square_term() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let k = keys(Backend::RlweToy, 1, &mut rng);
    let m = random_vec(2, &mut rng);
    let c = encrypt(k[0].public_key(), &m, &mut rng).unwrap();
    let sq = ct_mul(&c, &c).unwrap();
    assert!(matches!(&sq.payload, Payload::Rlwe(map) if map.contains_key(&Monomial::Quad(1, 1))));
    assert_eq!(dec(&k, &sq, &mut rng), m.iter().map(|a| a * a).collect::<Vec<_>>());
}

#[test]
fn broadcast_scalar_ciphertext() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let k = keys(backend, 2, &mut rng);
        let u = Fp::random(&mut rng);
        let v: Vec<Fp> = (0..5).map(|_| Fp::random(&mut rng)).collect();
        let cu = encrypt_field(k[0].public_key(), &[u], &mut rng).unwrap();
        let cv = encrypt_field(k[1].public_key(), &v, &mut rng).unwrap();
        let refs: Vec<&MkheKeyPair> = k.iter().collect();
        for prod in [ct_mul(&cu, &cv).unwrap(), ct_mul(&cv, &cu).unwrap()] {
            let got = joint_decrypt_field(&refs, &prod, &mut rng).unwrap();
            assert_eq!(got, v.iter().map(|x| u * *x).collect::<Vec<_>>());
        }
    }
}

#[test]
fn matrix_products_match_plaintext() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let k = keys(backend, 1, &mut rng);
        let m = random_vec(4, &mut rng);
        let c = encrypt(k[0].public_key(), &m, &mut rng).unwrap();
        let rows: Vec<Vec<(usize, Fp)>> = (0..3)
            .map(|r| vec![(r, Fp::random(&mut rng)), ((r + 2) % 4, Fp::random(&mut rng))])
            .collect();
        let sparse = PlainMatrix::Field(SparseMatrix::from_rows(4, rows).unwrap());
        assert_eq!(dec(&k, &matrix_mul(&sparse, &c).unwrap(), &mut rng), sparse.apply(&m).unwrap());
        let ring = PlainMatrix::Ring(RingMatrix::new((0..2).map(|_| random_vec(4, &mut rng)).collect()).unwrap());
        let got = dec(&k, &eval(EvalOp::MatrixMul, &c, Operand::Matrix(&ring)).unwrap(), &mut rng);
        assert_eq!(got, ring.apply(&m).unwrap());
        // Oracle for the ring product: schoolbook multiplication.
        let RingMatrix { rows, .. } = match &ring {
            PlainMatrix::Ring(r) => r.clone(),
            _ => unreachable!(),
        };
        for (row, g) in rows.iter().zip(&got) {
            let mut acc = RingElement::zero(N);
            for (h, x) in row.iter().zip(&m) {
                acc.add_assign(&h.mul_schoolbook(x).unwrap());
            }
            assert_eq!(&acc, g);
        }
    }
}

#[test]
fn depth_and_length_errors() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let k = keys(backend, 1, &mut rng);
        let c = encrypt(k[0].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
        let c3 = encrypt(k[0].public_key(), &random_vec(3, &mut rng), &mut rng).unwrap();
        let lvl1 = ct_mul(&c, &c).unwrap();
        assert_eq!(ct_mul(&lvl1, &c), Err(MkheError::DepthExceeded));
        assert!(matches!(add(&c, &c3), Err(MkheError::ParamMismatch { .. })));
        assert!(matches!(ct_mul(&c, &c3), Err(MkheError::ParamMismatch { .. })));
        assert!(add(&lvl1, &c).unwrap().level() == 1);
        assert!(eval(EvalOp::Add, &c, Operand::Scalar(Fp::ONE)).is_err());
    }
}

#[test]
fn backends_do_not_mix() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let kt = keys(Backend::Transparent, 1, &mut rng);
    let kr = keys(Backend::RlweToy, 1, &mut rng);
    let m = random_vec(1, &mut rng);
    let ct = encrypt(kt[0].public_key(), &m, &mut rng).unwrap();
    let cr = encrypt(kr[0].public_key(), &m, &mut rng).unwrap();
    assert_eq!(add(&ct, &cr), Err(MkheError::BackendMismatch));
}

#[test]
fn noise_budget_is_enforced() {
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let k = keys(Backend::RlweToy, 1, &mut rng);
    let mut c = encrypt(k[0].public_key(), &random_vec(1, &mut rng), &mut rng).unwrap();
    let big = Fp::new(1 << 62);
    let mut steps = 0;
    let err = loop {
        match scalar_mul(big, &c) {
            Ok(next) => c = next,
            Err(e) => break e,
        }
        steps += 1;
    };
    assert!(matches!(err, MkheError::NoiseBudgetExceeded { .. }));
    assert!(steps >= 5, "only {steps} scalings fit");
    // The last ciphertext that passed the check still decrypts exactly.
    let ctx = RnsContext::get(N);
    assert!(c.noise_log2() + EVAL_HEADROOM_BITS < ctx.q_log2());
    let _ = dec(&k, &c, &mut rng);
}

#[test]
fn noise_estimate_bounds_actual_phase() {
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let k = keys(Backend::RlweToy, 2, &mut rng);
    let a = encrypt(k[0].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
    let b = encrypt(k[1].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
    let prod = ct_mul(&scalar_mul(Fp::random(&mut rng), &a).unwrap(), &b).unwrap();
    let ctx = RnsContext::get(N);
    let (SkMaterial::Rlwe(s1), SkMaterial::Rlwe(s2)) = (&k[0].sk, &k[1].sk) else { unreachable!() };
    let Payload::Rlwe(map) = &prod.payload else { unreachable!() };
    let s = |p: PartyId| if p == 1 { &s1.s } else { &s2.s };
    let mut phase = map[&Monomial::One][0].clone();
    for (mon, polys) in map {
        let term = match mon {
            Monomial::One => continue,
            Monomial::Linear(i) => ctx.mul(&polys[0], s(*i)),
            Monomial::Quad(i, j) => ctx.mul(&ctx.mul(&polys[0], s(*i)), s(*j)),
        };
        phase = ctx.add(&phase, &term);
    }
    let bits = ctx.max_centered_log2(&phase);
    assert!(bits <= prod.noise_log2(), "actual 2^{bits:.1} exceeds bound 2^{:.1}", prod.noise_log2());
}

#[test]
fn decryption_participation_rules() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let k = keys(backend, 3, &mut rng);
        let c1 = encrypt(k[0].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
        let c2 = encrypt(k[1].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
        let prod = ct_mul(&c1, &c2).unwrap();

        assert_eq!(partial_decrypt(&k[2], &prod, &[], &mut rng), Err(MkheError::NotAParticipant(3)));

        let mut relays = relay_shares(&k[0], &prod, &mut rng).unwrap();
        relays.extend(relay_shares(&k[1], &prod, &mut rng).unwrap());
        let s1 = partial_decrypt(&k[0], &prod, &relays, &mut rng).unwrap();
        let s2 = partial_decrypt(&k[1], &prod, &relays, &mut rng).unwrap();

        assert_eq!(combine(&[s1.clone()], &prod), Err(MkheError::IncompleteShares { missing: vec![2] }));
        let full = combine(&[s1.clone(), s2.clone()], &prod).unwrap();
        assert_eq!(combine(&[s1.clone(), s2.clone(), s1.clone()], &prod).unwrap(), full);

        // Shares for c1 do not open the product and vice versa.
        let single = partial_decrypt(&k[0], &c1, &[], &mut rng).unwrap();
        assert!(matches!(combine(&[single.clone()], &c1), Ok(_)));
        assert_eq!(combine(&[single, s2.clone()], &prod), Err(MkheError::ShareBindingError { party: 1 }));
    }
}

#[test]
fn missing_relay_blocks_second_round() {
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let k = keys(Backend::RlweToy, 2, &mut rng);
    let c1 = encrypt(k[0].public_key(), &random_vec(1, &mut rng), &mut rng).unwrap();
    let c2 = encrypt(k[1].public_key(), &random_vec(1, &mut rng), &mut rng).unwrap();
    let prod = ct_mul(&c1, &c2).unwrap();
    assert_eq!(partial_decrypt(&k[1], &prod, &[], &mut rng), Err(MkheError::IncompleteShares { missing: vec![1] }));
    let other = ct_mul(&c2, &c1).unwrap();
    let wrong = relay_shares(&k[0], &add(&other, &prod).unwrap(), &mut rng).unwrap();
    assert!(matches!(partial_decrypt(&k[1], &prod, &wrong, &mut rng), Err(MkheError::ShareBindingError { .. })));
}

#[test]
fn shares_are_smudged() {
    let mut rng = ChaCha20Rng::seed_from_u64(18);
    let k = keys(Backend::RlweToy, 1, &mut rng);
    let c = encrypt(k[0].public_key(), &random_vec(1, &mut rng), &mut rng).unwrap();
    let a = partial_decrypt(&k[0], &c, &[], &mut rng).unwrap();
    let b = partial_decrypt(&k[0], &c, &[], &mut rng).unwrap();
    assert_ne!(a, b);
    assert_eq!(combine(&[a], &c).unwrap(), combine(&[b], &c).unwrap());
}

#[test]
fn backends_agree_on_mixed_circuit() {
    let mut outputs = Vec::new();
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let k = keys(backend, 3, &mut rng);
        let mut data = ChaCha20Rng::seed_from_u64(99);
        let xs: Vec<Vec<Fp>> = (0..3).map(|_| (0..4).map(|_| Fp::random(&mut data)).collect()).collect();
        let cts: Vec<_> = xs.iter().zip(&k).map(|(x, kp)| encrypt_field(kp.public_key(), x, &mut rng).unwrap()).collect();
        let s = Fp::random(&mut data);
        let lin = add(&cts[0], &scalar_mul(s, &cts[1]).unwrap()).unwrap();
        let out = add(&ct_mul(&lin, &cts[2]).unwrap(), &cts[0]).unwrap();
        assert_eq!(out.key_set(), &[1, 2, 3]);
        let refs: Vec<&MkheKeyPair> = k.iter().collect();
        let got = joint_decrypt_field(&refs, &out, &mut rng).unwrap();
        let want: Vec<Fp> = (0..4).map(|i| (xs[0][i] + s * xs[1][i]) * xs[2][i] + xs[0][i]).collect();
        assert_eq!(got, want);
        outputs.push(got);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn encodings_roundtrip_and_carry_backend() {
    for backend in BACKENDS {
        let mut rng = ChaCha20Rng::seed_from_u64(20);
        let k = keys(backend, 2, &mut rng);
        let c1 = encrypt(k[0].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
        let c2 = encrypt(k[1].public_key(), &random_vec(2, &mut rng), &mut rng).unwrap();
        let prod = ct_mul(&c1, &c2).unwrap();
        let bytes = prod.to_bytes();
        assert_eq!(bytes[1], backend.id());
        let back = MultiKeyCiphertext::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.digest(), prod.digest());

        let relays = relay_shares(&k[0], &prod, &mut rng).unwrap();
        for r in &relays {
            assert_eq!(&RelayShare::from_bytes(&r.to_bytes()).unwrap(), r);
        }
        let share = partial_decrypt(&k[1], &prod, &relays, &mut rng).unwrap();
        assert_eq!(DecryptionShare::from_bytes(&share.to_bytes()).unwrap(), share);

        let mut bad = bytes.clone();
        bad[1] = 9;
        assert!(MultiKeyCiphertext::from_bytes(&bad).is_err());
        assert!(MultiKeyCiphertext::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn backend_names_parse() {
    for b in BACKENDS {
        assert_eq!(b.name().parse::<Backend>().unwrap(), b);
    }
    assert!("bfv".parse::<Backend>().is_err());
    assert!(MkheParams::new(Backend::RlweToy, 48).is_err());
}
