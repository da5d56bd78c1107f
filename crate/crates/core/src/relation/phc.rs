//! Personhood-credential record, the algebraic toy primitives used inside the
//! admission circuit, and the circuit itself.
//!
//! The hash is MiMC with exponent 7 in Miyaguchi-Preneel mode. The signature
//! is Schnorr over the multiplicative group `F_p^*` with generator 7. Both are
//! chosen so the three credential checks stay real constraints at a few
//! thousand rows; neither is secure and neither should leave this crate's
//! test and simulation setting.

use std::ops::Range;
use std::sync::OnceLock;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::builder::{ConstraintSystem, LinComb, Var};
use super::R1CSShape;
use crate::algebra::{Fp, GENERATOR, MODULUS};
use crate::encoding::{Domain, Encode, Hasher};

pub const MIMC_ROUNDS: usize = 64;
/// `gcd(7, p - 1) = 1`, so `x ↦ x^7` permutes `F_p`.
pub const MIMC_EXPONENT: u64 = 7;
pub const PHC_VERSION: u64 = 1;
pub const NUM_ATTRIBUTES: usize = 2;

/// Offsets into the public input vector.
pub const X_HASH_PHC: usize = 0;
pub const X_HOLDER_R: usize = 1;
pub const X_HOLDER_S: usize = 2;
pub const X_ISSUER_PK: usize = 3;
pub const NUM_PUBLIC: usize = 4;

fn round_constants() -> &'static [Fp; MIMC_ROUNDS] {
    static RC: OnceLock<[Fp; MIMC_ROUNDS]> = OnceLock::new();
    RC.get_or_init(|| {
        std::array::from_fn(|i| {
            let mut h = Hasher::new(Domain::MimcConstant);
            h.update(&(i as u64).to_le_bytes());
            Fp::from_le_bytes_wide(h.finish().as_bytes())
        })
    })
}

fn mimc_encrypt(key: Fp, m: Fp) -> Fp {
    let mut x = m;
    for c in round_constants() {
        x = (x + key + *c).pow(MIMC_EXPONENT);
    }
    x + key
}

/// Miyaguchi-Preneel chaining `h ← E_h(m) + m + h` from `h = 0`.
pub fn mimc_hash(inputs: &[Fp]) -> Fp {
    inputs.iter().fold(Fp::ZERO, |h, m| mimc_encrypt(h, *m) + *m + h)
}

fn mimc_hash_gadget(cs: &mut ConstraintSystem, inputs: &[LinComb]) -> LinComb {
    let mut h = LinComb::zero();
    for m in inputs {
        let mut x = m.clone();
        for c in round_constants() {
            let a = x.add(&h).add_constant(*c);
            let a2: LinComb = cs.mul(&a, &a).into();
            let a4: LinComb = cs.mul(&a2, &a2).into();
            let a6: LinComb = cs.mul(&a4, &a2).into();
            x = cs.mul(&a6, &a).into();
        }
        h = x.add(&h).add(m).add(&h);
    }
    h
}

/// `base^e` with `e` given as little-endian bits; one constraint per bit.
fn pow_fixed_gadget(cs: &mut ConstraintSystem, base: Fp, bits: &[Var]) -> LinComb {
    let mut acc = LinComb::constant(Fp::ONE);
    let mut g = base;
    for b in bits {
        let factor = LinComb::term(*b, g - Fp::ONE).add_constant(Fp::ONE);
        acc = cs.mul(&acc, &factor).into();
        g = g.square();
    }
    acc
}

/// `base^e` by square-and-multiply from the most significant bit; three
/// constraints per bit.
fn pow_var_gadget(cs: &mut ConstraintSystem, base: &LinComb, bits: &[Var]) -> LinComb {
    let mut acc = LinComb::constant(Fp::ONE);
    let base_minus_one = base.clone().add_constant(-Fp::ONE);
    for b in bits.iter().rev() {
        let sq: LinComb = cs.mul(&acc, &acc).into();
        let t: LinComb = cs.mul(&(*b).into(), &base_minus_one).into();
        acc = cs.mul(&sq, &t.add_constant(Fp::ONE)).into();
    }
    acc
}

/// Enforces `g^s = R · pk^c` with `c = H(R, pk, msg)`.
fn schnorr_verify_gadget(cs: &mut ConstraintSystem, pk: &LinComb, r: &LinComb, s_bits: &[Var], msg: &LinComb) {
    let c = mimc_hash_gadget(cs, &[r.clone(), pk.clone(), msg.clone()]);
    let c_bits = cs.to_bits(&c);
    let lhs = pow_fixed_gadget(cs, Fp::new(GENERATOR), s_bits);
    let pk_c = pow_var_gadget(cs, pk, &c_bits);
    cs.enforce(r.clone(), pk_c, lhs);
}

/// Toy Schnorr secret key, an exponent in `[1, p - 1)`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct ToySecretKey(u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ToyPublicKey(pub Fp);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToySignature {
    pub r: Fp,
    /// Exponent in `[0, p - 1)`, hence also a canonical field element.
    pub s: u64,
}

impl std::fmt::Debug for ToySecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ToySecretKey(..)")
    }
}

const GROUP_ORDER: u64 = MODULUS - 1;

fn challenge(r: Fp, pk: ToyPublicKey, msg: Fp) -> u64 {
    mimc_hash(&[r, pk.0, msg]).value()
}

impl ToySecretKey {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self(rng.gen_range(1..GROUP_ORDER))
    }

    pub fn public_key(&self) -> ToyPublicKey {
        ToyPublicKey(Fp::new(GENERATOR).pow(self.0))
    }

    pub fn sign<R: RngCore + ?Sized>(&self, msg: Fp, rng: &mut R) -> ToySignature {
        let k = rng.gen_range(1..GROUP_ORDER);
        let r = Fp::new(GENERATOR).pow(k);
        let c = challenge(r, self.public_key(), msg);
        let s = ((k as u128 + c as u128 * self.0 as u128) % GROUP_ORDER as u128) as u64;
        ToySignature { r, s }
    }
}

impl ToyPublicKey {
    pub fn verify(&self, msg: Fp, sig: &ToySignature) -> bool {
        if sig.s >= GROUP_ORDER || sig.r.is_zero() {
            return false;
        }
        let c = challenge(sig.r, *self, msg);
        Fp::new(GENERATOR).pow(sig.s) == sig.r * self.0.pow(c)
    }
}

/// Canonical credential record: fixed-order field elements under a versioned
/// layout `(version, holder_pk, issuer_pk, attributes...)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phc {
    pub version: u64,
    pub holder_pk: ToyPublicKey,
    pub issuer_pk: ToyPublicKey,
    pub attributes: [Fp; NUM_ATTRIBUTES],
    pub issuer_sig: ToySignature,
}

impl Phc {
    pub fn canonical_fields(&self) -> Vec<Fp> {
        let mut out = vec![Fp::new(self.version), self.holder_pk.0, self.issuer_pk.0];
        out.extend_from_slice(&self.attributes);
        out
    }

    pub fn hash(&self) -> Fp {
        mimc_hash(&self.canonical_fields())
    }

    pub fn issuer_signature_valid(&self) -> bool {
        self.issuer_pk.verify(self.hash(), &self.issuer_sig)
    }
}

impl Encode for Phc {
    fn encode_to(&self, out: &mut Vec<u8>) {
        for f in self.canonical_fields() {
            f.encode_to(out);
        }
        self.issuer_sig.r.encode_to(out);
        out.extend_from_slice(&self.issuer_sig.s.to_le_bytes());
    }
}

pub struct Issuer {
    sk: ToySecretKey,
}

impl Issuer {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self { sk: ToySecretKey::random(rng) }
    }

    pub fn public_key(&self) -> ToyPublicKey {
        self.sk.public_key()
    }

    pub fn issue<R: RngCore + ?Sized>(
        &self,
        holder_pk: ToyPublicKey,
        attributes: [Fp; NUM_ATTRIBUTES],
        rng: &mut R,
    ) -> Phc {
        let mut phc = Phc {
            version: PHC_VERSION,
            holder_pk,
            issuer_pk: self.public_key(),
            attributes,
            issuer_sig: ToySignature { r: Fp::ONE, s: 0 },
        };
        phc.issuer_sig = self.sk.sign(phc.hash(), rng);
        phc
    }
}

/// Row ranges of the three credential checks inside the shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhcLayout {
    pub integrity: Range<usize>,
    pub validity: Range<usize>,
    pub ownership: Range<usize>,
}

impl PhcLayout {
    pub fn classify(&self, row: usize) -> Option<&'static str> {
        if self.integrity.contains(&row) {
            Some("integrity")
        } else if self.validity.contains(&row) {
            Some("validity")
        } else if self.ownership.contains(&row) {
            Some("ownership")
        } else {
            None
        }
    }
}

fn synthesize(phc: &Phc, holder_sig: &ToySignature) -> (ConstraintSystem, PhcLayout) {
    let mut cs = ConstraintSystem::new();
    let x_hash = cs.alloc_public(phc.hash());
    let x_r = cs.alloc_public(holder_sig.r);
    let x_s = cs.alloc_public(Fp::new(holder_sig.s));
    let x_issuer = cs.alloc_public(phc.issuer_pk.0);

    let version = cs.alloc(Fp::new(phc.version));
    let holder_pk = cs.alloc(phc.holder_pk.0);
    let attrs: Vec<Var> = phc.attributes.iter().map(|a| cs.alloc(*a)).collect();
    let issuer_r = cs.alloc(phc.issuer_sig.r);

    let (_, integrity) = cs.section(|cs| {
        cs.enforce_equal(version.into(), LinComb::constant(Fp::new(PHC_VERSION)));
        let mut fields: Vec<LinComb> = vec![version.into(), holder_pk.into(), x_issuer.into()];
        fields.extend(attrs.iter().map(|a| LinComb::from(*a)));
        let h = mimc_hash_gadget(cs, &fields);
        cs.enforce_equal(h, x_hash.into());
    });
    let (_, validity) = cs.section(|cs| {
        let s_bits: Vec<Var> = (0..64).map(|k| cs.alloc_bit((phc.issuer_sig.s >> k) & 1 == 1)).collect();
        schnorr_verify_gadget(cs, &x_issuer.into(), &issuer_r.into(), &s_bits, &x_hash.into());
    });
    let (_, ownership) = cs.section(|cs| {
        let s_bits = cs.to_bits(&x_s.into());
        schnorr_verify_gadget(cs, &holder_pk.into(), &x_r.into(), &s_bits, &x_hash.into());
    });
    (cs, PhcLayout { integrity, validity, ownership })
}

/// Public input and witness for a credential and the holder's signature over
/// its hash. The result satisfies the relation iff the record hashes to
/// `hash_phc`, the issuer signature verifies, and the holder signature
/// verifies under the record's holder key.
pub fn phc_assignment(phc: &Phc, holder_sig: &ToySignature) -> (Vec<Fp>, Vec<Fp>) {
    synthesize(phc, holder_sig).0.into_assignment()
}

fn reference_phc() -> (Phc, ToySignature) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(0);
    let issuer = Issuer::random(&mut rng);
    let holder = ToySecretKey::random(&mut rng);
    let phc = issuer.issue(holder.public_key(), [Fp::ONE; NUM_ATTRIBUTES], &mut rng);
    let sig = holder.sign(phc.hash(), &mut rng);
    (phc, sig)
}

/// The admission relation. Its shape does not depend on any user data.
pub fn build_phc_relation() -> (R1CSShape, PhcLayout) {
    static CACHE: OnceLock<(R1CSShape, PhcLayout)> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            let (phc, sig) = reference_phc();
            let (cs, layout) = synthesize(&phc, &sig);
            (cs.shape(), layout)
        })
        .clone()
}
