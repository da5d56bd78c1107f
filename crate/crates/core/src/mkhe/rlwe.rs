//! BGV-style RLWE keys and encryption over the RNS modulus. Every party samples
//! its own uniform `a`; multi-key ciphertexts concatenate per-key components.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::rns::{RnsContext, RnsPoly};
use crate::algebra::{RingElement, MODULUS};
use crate::encoding::{hash, Domain};

#[derive(Clone, PartialEq, Eq)]
pub(crate) struct RlwePublicKey {
    pub b: RnsPoly,
    pub a: RnsPoly,
}

#[derive(Clone)]
pub(crate) struct RlweSecretKey {
    pub s: RnsPoly,
    pub s2: RnsPoly,
    s_coeffs: Vec<i128>,
    key_seed: [u8; 32],
}

fn times_t(v: &[i128]) -> Vec<i128> {
    v.iter().map(|x| x * MODULUS as i128).collect()
}

pub(crate) fn keygen<R: RngCore + ?Sized>(ctx: &RnsContext, rng: &mut R) -> RlweSecretKey {
    let s_coeffs = ctx.sample_ternary(rng);
    let mut key_seed = [0u8; 32];
    rng.fill_bytes(&mut key_seed);
    let s = ctx.from_signed(&s_coeffs);
    let s2 = ctx.mul(&s, &s);
    RlweSecretKey { s, s2, s_coeffs, key_seed }
}

/// `pk = (-a·s + t·e, a)` with `a`, `e` expanded from the key seed.
pub(crate) fn derive_public(ctx: &RnsContext, sk: &RlweSecretKey) -> RlwePublicKey {
    let mut rng = ChaCha20Rng::from_seed(hash(Domain::KeyDerivation, &sk.key_seed).0);
    let a = ctx.uniform(&mut rng);
    let e = ctx.sample_cbd(&mut rng);
    let b = ctx.sub(&ctx.from_signed(&times_t(&e)), &ctx.mul(&a, &sk.s));
    RlwePublicKey { b, a }
}

/// `(b·r + t·e1 + m, a·r + t·e2)` with ternary `r` and CBD errors.
pub(crate) fn encrypt_one<R: RngCore + ?Sized>(
    ctx: &RnsContext,
    pk: &RlwePublicKey,
    m: &RingElement,
    rng: &mut R,
) -> (RnsPoly, RnsPoly) {
    let r = ctx.from_signed(&ctx.sample_ternary(rng));
    let e1 = ctx.sample_cbd(rng);
    let e2 = ctx.sample_cbd(rng);
    let shift: Vec<i128> = e1.iter().zip(m.coeffs()).map(|(e, c)| e * MODULUS as i128 + c.centered()).collect();
    let c0 = ctx.add(&ctx.mul(&pk.b, &r), &ctx.from_signed(&shift));
    let c1 = ctx.add(&ctx.mul(&pk.a, &r), &ctx.from_signed(&times_t(&e2)));
    (c0, c1)
}

/// `log2(t·(4n + 2) + t/2)`: bound on the decryption phase of a fresh
/// ciphertext.
pub(crate) fn fresh_noise_log2(n: usize) -> f64 {
    let t = MODULUS as f64;
    (t * (4.0 * n as f64 + 2.0) + t / 2.0).log2()
}

/// `t·e` for `e` uniform in `[-2^bits, 2^bits]`.
pub(crate) fn smudge<R: RngCore + ?Sized>(ctx: &RnsContext, bits: u32, rng: &mut R) -> RnsPoly {
    let e = ctx.reduce_limbs(&ctx.sample_wide(bits, rng));
    let t = ctx.scalar_u64(MODULUS);
    ctx.mul_scalar(&e, &t)
}

impl RlweSecretKey {
    #[cfg(test)]
    pub(crate) fn coeffs(&self) -> &[i128] {
        &self.s_coeffs
    }
}

impl std::fmt::Debug for RlweSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RlweSecretKey(..)")
    }
}

impl Drop for RlweSecretKey {
    fn drop(&mut self) {
        self.s_coeffs.iter_mut().for_each(|c| *c = 0);
        self.key_seed = [0; 32];
    }
}
