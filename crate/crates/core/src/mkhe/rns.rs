//! Residue-number-system arithmetic for `Z_q[X]/(X^n + 1)` with `q` a product
//! of NTT-friendly primes below `2^61`. Residues are kept in Montgomery form
//! (`R = 2^64`) and polynomials in the negacyclic evaluation domain.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::{BigInt, BigUint, Sign};
use rand::RngCore;

use crate::algebra::{Fp, RingElement, MODULUS};

pub const NUM_PRIMES: usize = 8;
const PRIME_BITS: u32 = 61;

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub(crate) fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

pub(crate) struct Prime {
    pub q: u64,
    /// `-q^{-1} mod 2^64`.
    neg_q_inv: u64,
    /// `R^2 mod q`.
    r2: u64,
    psi_rev: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
}

impl Prime {
    fn new(q: u64, n: usize) -> Self {
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(q.wrapping_mul(inv)));
        }
        let r = ((1u128 << 64) % q as u128) as u64;
        let r2 = mul_mod(r, r, q);
        let two_n = 2 * n as u64;
        let psi = (2..)
            .map(|g| pow_mod(g, (q - 1) / two_n, q))
            .find(|psi| pow_mod(*psi, n as u64, q) == q - 1)
            .expect("a primitive 2n-th root exists when 2n | q - 1");
        let psi_inv = pow_mod(psi, q - 2, q);
        let mut p = Self { q, neg_q_inv: inv.wrapping_neg(), r2, psi_rev: vec![], psi_inv_rev: vec![], n_inv: 0 };
        let log_n = n.trailing_zeros();
        p.psi_rev = (0..n).map(|i| p.to_mont(pow_mod(psi, bit_reverse(i, log_n) as u64, q))).collect();
        p.psi_inv_rev = (0..n).map(|i| p.to_mont(pow_mod(psi_inv, bit_reverse(i, log_n) as u64, q))).collect();
        p.n_inv = p.to_mont(pow_mod(n as u64, q - 2, q));
        p
    }

    #[inline]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.neg_q_inv);
        let r = ((t + m as u128 * self.q as u128) >> 64) as u64;
        if r >= self.q {
            r - self.q
        } else {
            r
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.q {
            s - self.q
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.q - b
        }
    }

    pub fn to_mont(&self, x: u64) -> u64 {
        self.mul(x % self.q, self.r2)
    }

    pub fn from_mont(&self, x: u64) -> u64 {
        self.redc(x as u128)
    }

    pub fn from_i128(&self, x: i128) -> u64 {
        let r = x.rem_euclid(self.q as i128) as u64;
        self.to_mont(r)
    }

    fn forward(&self, a: &mut [u64]) {
        let n = a.len();
        let mut t = n;
        let mut m = 1;
        while m < n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let s = self.psi_rev[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = self.mul(a[j + t], s);
                    a[j] = self.add(u, v);
                    a[j + t] = self.sub(u, v);
                }
            }
            m *= 2;
        }
    }

    fn inverse(&self, a: &mut [u64]) {
        let n = a.len();
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = self.add(u, v);
                    a[j + t] = self.mul(self.sub(u, v), s);
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = self.mul(*x, self.n_inv);
        }
    }
}

pub struct RnsContext {
    pub n: usize,
    pub(crate) primes: Vec<Prime>,
    q: BigUint,
    half_q: BigUint,
    /// `(q/q_j) · ((q/q_j)^{-1} mod q_j)`.
    crt: Vec<BigUint>,
    /// `2^{64k} mod q_j` in Montgomery form, indexed `[j][k]`.
    limb_pows: Vec<Vec<u64>>,
    q_log2: f64,
}

/// Largest limb count accepted by [`RnsContext::reduce_limbs`].
pub const MAX_LIMBS: usize = 9;

impl RnsContext {
    fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let step = 2 * n as u64;
        let mut candidate = (1u64 << PRIME_BITS) - (1u64 << PRIME_BITS) % step + 1;
        let mut moduli = Vec::with_capacity(NUM_PRIMES);
        while moduli.len() < NUM_PRIMES {
            candidate -= step;
            if is_prime(candidate) && candidate != MODULUS {
                moduli.push(candidate);
            }
        }
        let primes: Vec<Prime> = moduli.iter().map(|q| Prime::new(*q, n)).collect();
        let q: BigUint = moduli.iter().map(|q| BigUint::from(*q)).product();
        let crt = moduli
            .iter()
            .map(|qj| {
                let qhat = &q / qj;
                let qhat_mod = (&qhat % qj).to_u64_digits().first().copied().unwrap_or(0);
                qhat * pow_mod(qhat_mod, qj - 2, *qj)
            })
            .collect();
        let limb_pows = primes
            .iter()
            .map(|p| {
                let base = ((1u128 << 64) % p.q as u128) as u64;
                let mut acc = 1u64;
                (0..MAX_LIMBS)
                    .map(|_| {
                        let cur = p.to_mont(acc);
                        acc = mul_mod(acc, base, p.q);
                        cur
                    })
                    .collect()
            })
            .collect();
        let q_log2 = moduli.iter().map(|q| (*q as f64).log2()).sum();
        let half_q = &q >> 1;
        Self { n, primes, q, half_q, crt, limb_pows, q_log2 }
    }

    pub fn get(n: usize) -> Arc<RnsContext> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<RnsContext>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().expect("rns context cache poisoned");
        guard.entry(n).or_insert_with(|| Arc::new(RnsContext::new(n))).clone()
    }

    pub fn moduli(&self) -> Vec<u64> {
        self.primes.iter().map(|p| p.q).collect()
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn q_log2(&self) -> f64 {
        self.q_log2
    }

    pub fn zero(&self) -> RnsPoly {
        RnsPoly { limbs: vec![vec![0; self.n]; self.primes.len()] }
    }

    /// Evaluation-domain image of an integer polynomial.
    pub fn from_signed(&self, coeffs: &[i128]) -> RnsPoly {
        debug_assert_eq!(coeffs.len(), self.n);
        let limbs = self
            .primes
            .iter()
            .map(|p| {
                let mut v: Vec<u64> = coeffs.iter().map(|c| p.from_i128(*c)).collect();
                p.forward(&mut v);
                v
            })
            .collect();
        RnsPoly { limbs }
    }

    /// Centered integer lift of an `R_t` element.
    pub fn from_ring(&self, m: &RingElement) -> RnsPoly {
        let coeffs: Vec<i128> = m.coeffs().iter().map(|c| c.centered()).collect();
        self.from_signed(&coeffs)
    }

    /// Centered lift of a field scalar into each residue, Montgomery form.
    pub fn scalar(&self, s: Fp) -> Vec<u64> {
        self.primes.iter().map(|p| p.from_i128(s.centered())).collect()
    }

    pub fn scalar_u64(&self, s: u64) -> Vec<u64> {
        self.primes.iter().map(|p| p.from_i128(s as i128)).collect()
    }

    /// Polynomial whose coefficients are signed multi-limb integers
    /// `sign · Σ_k limbs[k]·2^{64k}`.
    pub fn reduce_limbs(&self, coeffs: &[(bool, Vec<u64>)]) -> RnsPoly {
        let limbs = self
            .primes
            .iter()
            .zip(&self.limb_pows)
            .map(|(p, pows)| {
                let mut v: Vec<u64> = coeffs
                    .iter()
                    .map(|(neg, ls)| {
                        let mut acc = 0u64;
                        for (l, pw) in ls.iter().zip(pows) {
                            acc = p.add(acc, p.mul(p.to_mont(*l), *pw));
                        }
                        if *neg {
                            p.sub(0, acc)
                        } else {
                            acc
                        }
                    })
                    .collect();
                p.forward(&mut v);
                v
            })
            .collect();
        RnsPoly { limbs }
    }

    /// Centered integer coefficients of an evaluation-domain polynomial.
    pub fn centered(&self, a: &RnsPoly) -> Vec<BigInt> {
        let coeff_limbs: Vec<Vec<u64>> = self
            .primes
            .iter()
            .zip(&a.limbs)
            .map(|(p, l)| {
                let mut v = l.clone();
                p.inverse(&mut v);
                v.into_iter().map(|x| p.from_mont(x)).collect()
            })
            .collect();
        (0..self.n)
            .map(|i| {
                let mut acc = BigUint::default();
                for (j, c) in self.crt.iter().enumerate() {
                    acc += c * coeff_limbs[j][i];
                }
                acc %= &self.q;
                if acc > self.half_q {
                    BigInt::from_biguint(Sign::Minus, &self.q - &acc)
                } else {
                    BigInt::from(acc)
                }
            })
            .collect()
    }

    /// Decodes to centered integers and reduces them mod `p`.
    pub fn decode_mod_p(&self, a: &RnsPoly) -> RingElement {
        let t = BigInt::from(MODULUS);
        let coeffs = self
            .centered(a)
            .into_iter()
            .map(|c| {
                let r = ((c % &t) + &t) % &t;
                Fp::new(r.to_u64_digits().1.first().copied().unwrap_or(0))
            })
            .collect();
        RingElement::from_coeffs(coeffs).expect("dimension preserved")
    }

    /// `log2` of the largest centered coefficient magnitude.
    pub fn max_centered_log2(&self, a: &RnsPoly) -> f64 {
        self.centered(a).iter().map(|c| c.magnitude().bits()).max().unwrap_or(0) as f64
    }

    pub fn sample_ternary<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<i128> {
        (0..self.n)
            .map(|_| match rng.next_u32() % 3 {
                0 => -1,
                1 => 0,
                _ => 1,
            })
            .collect()
    }

    /// Centered binomial distribution with `η = 2`.
    pub fn sample_cbd<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<i128> {
        (0..self.n)
            .map(|_| {
                let b = rng.next_u32();
                let ones = |x: u32| (x & 1) + ((x >> 1) & 1);
                ones(b) as i128 - ones(b >> 2) as i128
            })
            .collect()
    }

    /// Uniform coefficients in `[-2^bits, 2^bits]` as signed limbs.
    pub fn sample_wide<R: RngCore + ?Sized>(&self, bits: u32, rng: &mut R) -> Vec<(bool, Vec<u64>)> {
        let full = (bits / 64) as usize;
        let rem = bits % 64;
        assert!(full < MAX_LIMBS, "smudging width exceeds limb table");
        (0..self.n)
            .map(|_| {
                let mut ls: Vec<u64> = (0..full).map(|_| rng.next_u64()).collect();
                if rem > 0 {
                    ls.push(rng.next_u64() & ((1u64 << rem) - 1));
                }
                (rng.next_u32() & 1 == 1, ls)
            })
            .collect()
    }

    pub fn uniform<R: RngCore + ?Sized>(&self, rng: &mut R) -> RnsPoly {
        let limbs = self
            .primes
            .iter()
            .map(|p| (0..self.n).map(|_| p.to_mont(rng.next_u64())).collect())
            .collect();
        RnsPoly { limbs }
    }

    pub fn add(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        self.zip(a, b, |p, x, y| p.add(x, y))
    }

    pub fn sub(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        self.zip(a, b, |p, x, y| p.sub(x, y))
    }

    pub fn mul(&self, a: &RnsPoly, b: &RnsPoly) -> RnsPoly {
        self.zip(a, b, |p, x, y| p.mul(x, y))
    }

    pub fn neg(&self, a: &RnsPoly) -> RnsPoly {
        self.map(a, |p, x| p.sub(0, x))
    }

    /// Multiplication by a per-residue scalar from [`RnsContext::scalar`].
    pub fn mul_scalar(&self, a: &RnsPoly, s: &[u64]) -> RnsPoly {
        let limbs = self
            .primes
            .iter()
            .zip(&a.limbs)
            .zip(s)
            .map(|((p, l), s)| l.iter().map(|x| p.mul(*x, *s)).collect())
            .collect();
        RnsPoly { limbs }
    }

    /// `acc += a · s`.
    pub fn add_scaled_assign(&self, acc: &mut RnsPoly, a: &RnsPoly, s: &[u64]) {
        for (((p, dst), src), s) in self.primes.iter().zip(&mut acc.limbs).zip(&a.limbs).zip(s) {
            for (d, x) in dst.iter_mut().zip(src) {
                *d = p.add(*d, p.mul(*x, *s));
            }
        }
    }

    /// `acc += a · b`.
    pub fn add_mul_assign(&self, acc: &mut RnsPoly, a: &RnsPoly, b: &RnsPoly) {
        for (((p, dst), x), y) in self.primes.iter().zip(&mut acc.limbs).zip(&a.limbs).zip(&b.limbs) {
            for ((d, x), y) in dst.iter_mut().zip(x).zip(y) {
                *d = p.add(*d, p.mul(*x, *y));
            }
        }
    }

    pub fn add_assign(&self, acc: &mut RnsPoly, a: &RnsPoly) {
        for ((p, dst), src) in self.primes.iter().zip(&mut acc.limbs).zip(&a.limbs) {
            for (d, x) in dst.iter_mut().zip(src) {
                *d = p.add(*d, *x);
            }
        }
    }

    fn zip(&self, a: &RnsPoly, b: &RnsPoly, f: impl Fn(&Prime, u64, u64) -> u64) -> RnsPoly {
        let limbs = self
            .primes
            .iter()
            .zip(a.limbs.iter().zip(&b.limbs))
            .map(|(p, (x, y))| x.iter().zip(y).map(|(x, y)| f(p, *x, *y)).collect())
            .collect();
        RnsPoly { limbs }
    }

    fn map(&self, a: &RnsPoly, f: impl Fn(&Prime, u64) -> u64) -> RnsPoly {
        let limbs = self.primes.iter().zip(&a.limbs).map(|(p, x)| x.iter().map(|x| f(p, *x)).collect()).collect();
        RnsPoly { limbs }
    }

    /// Checks residue count, dimension and range.
    pub fn validate(&self, a: &RnsPoly) -> bool {
        a.limbs.len() == self.primes.len()
            && a.limbs.iter().zip(&self.primes).all(|(l, p)| l.len() == self.n && l.iter().all(|x| *x < p.q))
    }
}

/// A polynomial in `R_q`: one Montgomery-form evaluation vector per prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub(crate) limbs: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn dim(&self) -> usize {
        self.limbs.first().map_or(0, |l| l.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn primes_are_ntt_friendly() {
        let ctx = RnsContext::get(64);
        let mods = ctx.moduli();
        assert_eq!(mods.len(), NUM_PRIMES);
        for q in &mods {
            assert!(is_prime(*q));
            assert_eq!((q - 1) % 128, 0);
            assert!(*q < 1 << PRIME_BITS);
        }
        let mut sorted = mods.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), NUM_PRIMES);
        assert!(ctx.q_log2() > 480.0);
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        let trial = |n: u64| n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
        for n in 0..5000u64 {
            assert_eq!(is_prime(n), trial(n), "{n}");
        }
        assert!(is_prime(MODULUS));
        assert!(!is_prime(MODULUS - 2));
    }

    fn schoolbook(a: &[i128], b: &[i128]) -> Vec<i128> {
        let n = a.len();
        let mut out = vec![0i128; n];
        for i in 0..n {
            for j in 0..n {
                let k = i + j;
                if k < n {
                    out[k] += a[i] * b[j];
                } else {
                    out[k - n] -= a[i] * b[j];
                }
            }
        }
        out
    }

    #[test]
    fn product_matches_negacyclic_schoolbook() {
        let ctx = RnsContext::get(16);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a: Vec<i128> = (0..16).map(|_| (rng.next_u32() as i128) - (1 << 31)).collect();
            let b: Vec<i128> = (0..16).map(|_| (rng.next_u32() as i128) - (1 << 31)).collect();
            let prod = ctx.mul(&ctx.from_signed(&a), &ctx.from_signed(&b));
            let want: Vec<Fp> = schoolbook(&a, &b).into_iter().map(|c| Fp::new(c.rem_euclid(MODULUS as i128) as u64)).collect();
            assert_eq!(ctx.decode_mod_p(&prod).coeffs(), &want[..]);
        }
    }

    #[test]
    fn decode_recovers_centered_values() {
        let ctx = RnsContext::get(8);
        let coeffs: Vec<i128> = vec![0, 1, -1, 12345, -98765, i64::MAX as i128, i64::MIN as i128, 7];
        let got = ctx.decode_mod_p(&ctx.from_signed(&coeffs));
        for (g, c) in got.coeffs().iter().zip(&coeffs) {
            assert_eq!(*g, Fp::new(c.rem_euclid(MODULUS as i128) as u64));
        }
    }

    #[test]
    fn wide_limbs_reduce_like_bigint() {
        let ctx = RnsContext::get(4);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let wide = ctx.sample_wide(300, &mut rng);
        let got = ctx.decode_mod_p(&ctx.reduce_limbs(&wide));
        for ((neg, ls), g) in wide.iter().zip(got.coeffs()) {
            let mag = ls.iter().rev().fold(BigUint::default(), |acc, l| (acc << 64) + *l);
            let p = BigUint::from(MODULUS);
            let r = (mag % &p).to_u64_digits().first().copied().unwrap_or(0);
            let want = if *neg { -Fp::new(r) } else { Fp::new(r) };
            assert_eq!(*g, want);
        }
    }

    #[test]
    fn scalar_lift_is_centered() {
        let ctx = RnsContext::get(4);
        let one = ctx.from_signed(&[1, 0, 0, 0]);
        let s = Fp::MINUS_ONE;
        let got = ctx.decode_mod_p(&ctx.mul_scalar(&one, &ctx.scalar(s)));
        assert_eq!(got.constant_term(), s);
    }
}
