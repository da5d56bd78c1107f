use std::fmt;
use std::iter::{Product, Sum};
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::AlgebraError;
use crate::encoding::{Decode, DecodeError, Encode, Reader};

/// The protocol field modulus, `2^64 - 2^32 + 1`.
pub const MODULUS: u64 = 0xFFFF_FFFF_0000_0001;

/// `2^64 mod p`.
const EPSILON: u64 = 0xFFFF_FFFF;

/// Multiplicative generator of the full group `F_p^*`.
pub const GENERATOR: u64 = 7;

/// Two-adicity of `p - 1`.
pub const TWO_ADICITY: u32 = 32;

/// An element of `F_p`, always held in canonical form `[0, p)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fp(u64);

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);
    pub const MINUS_ONE: Fp = Fp(MODULUS - 1);

    /// Reduces an arbitrary `u64`.
    pub const fn new(v: u64) -> Self {
        if v >= MODULUS {
            Fp(v - MODULUS)
        } else {
            Fp(v)
        }
    }

    /// Accepts only canonical representatives.
    pub fn from_canonical(v: u64) -> Option<Self> {
        (v < MODULUS).then_some(Fp(v))
    }

    pub fn from_u128(v: u128) -> Self {
        Fp(reduce128(v))
    }

    pub fn from_i64(v: i64) -> Self {
        if v >= 0 {
            Fp::new(v as u64)
        } else {
            -Fp::new(v.unsigned_abs())
        }
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Representative in `(-p/2, p/2]`.
    pub fn centered(self) -> i128 {
        if self.0 > MODULUS / 2 {
            self.0 as i128 - MODULUS as i128
        } else {
            self.0 as i128
        }
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    pub fn inv(self) -> Result<Self, AlgebraError> {
        if self.is_zero() {
            return Err(AlgebraError::DivisionByZero);
        }
        Ok(self.pow(MODULUS - 2))
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Fp(rng.gen_range(0..MODULUS))
    }

    /// Primitive `2^log_order`-th root of unity.
    pub fn two_adic_root(log_order: u32) -> Self {
        assert!(log_order <= TWO_ADICITY, "order exceeds two-adicity");
        Fp(GENERATOR).pow((MODULUS - 1) >> log_order)
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    /// Reduces a little-endian byte string of any length (Horner in base 2^64).
    pub fn from_le_bytes_wide(bytes: &[u8]) -> Self {
        let mut acc = Fp::ZERO;
        let radix = Fp::from_u128(1u128 << 64);
        for chunk in bytes.rchunks(8) {
            let mut limb = [0u8; 8];
            limb[..chunk.len()].copy_from_slice(chunk);
            acc = acc * radix + Fp::new(u64::from_le_bytes(limb));
        }
        acc
    }
}

/// Reduction of a 128-bit product using `2^64 = 2^32 - 1` and `2^96 = -1`.
#[inline]
fn reduce128(x: u128) -> u64 {
    let lo = x as u64;
    let hi = (x >> 64) as u64;
    let hi_hi = hi >> 32;
    let hi_lo = hi & EPSILON;

    let (mut t0, borrow) = lo.overflowing_sub(hi_hi);
    if borrow {
        t0 = t0.wrapping_sub(EPSILON);
    }
    let t1 = hi_lo * EPSILON;
    let (mut res, carry) = t0.overflowing_add(t1);
    if carry {
        res = res.wrapping_add(EPSILON);
    }
    if res >= MODULUS {
        res -= MODULUS;
    }
    res
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Fp {
    fn from(v: u64) -> Self {
        Fp::new(v)
    }
}

impl From<bool> for Fp {
    fn from(b: bool) -> Self {
        Fp(b as u64)
    }
}

impl Add for Fp {
    type Output = Fp;
    #[inline]
    fn add(self, rhs: Fp) -> Fp {
        let (sum, over) = self.0.overflowing_add(rhs.0);
        let (mut sum, over2) = sum.overflowing_add(EPSILON * over as u64);
        if over2 {
            sum += EPSILON;
        }
        Fp::new(sum)
    }
}

impl Sub for Fp {
    type Output = Fp;
    #[inline]
    fn sub(self, rhs: Fp) -> Fp {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp(self.0.wrapping_sub(rhs.0).wrapping_add(MODULUS))
        }
    }
}

impl Mul for Fp {
    type Output = Fp;
    #[inline]
    fn mul(self, rhs: Fp) -> Fp {
        Fp(reduce128(self.0 as u128 * rhs.0 as u128))
    }
}

impl Neg for Fp {
    type Output = Fp;
    #[inline]
    fn neg(self) -> Fp {
        if self.0 == 0 {
            self
        } else {
            Fp(MODULUS - self.0)
        }
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, rhs: Fp) {
        *self = *self * rhs;
    }
}

impl Sum for Fp {
    fn sum<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ZERO, Add::add)
    }
}

impl Product for Fp {
    fn product<I: Iterator<Item = Fp>>(iter: I) -> Fp {
        iter.fold(Fp::ONE, Mul::mul)
    }
}

impl Encode for Fp {
    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }
}

impl Decode for Fp {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Fp::from_canonical(r.u64()?).ok_or(DecodeError::Invalid("non-canonical field element"))
    }
}

/// Field-wise helpers on vectors.
pub fn add_vec(a: &[Fp], b: &[Fp]) -> Vec<Fp> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

pub fn scale_vec(a: &[Fp], s: Fp) -> Vec<Fp> {
    a.iter().map(|x| *x * s).collect()
}

/// `a + s * b`, entry-wise.
pub fn axpy(a: &[Fp], s: Fp, b: &[Fp]) -> Vec<Fp> {
    a.iter().zip(b).map(|(x, y)| *x + s * *y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn big(x: u64) -> BigUint {
        BigUint::from(x)
    }

    fn oracle_mul(a: u64, b: u64) -> u64 {
        let r = big(a) * big(b) % big(MODULUS);
        r.try_into().unwrap()
    }

    #[test]
    fn additive_identity() {
        let x = Fp::new(123456789);
        assert_eq!(Fp::ZERO + x, x);
    }

    #[test]
    fn inverse_of_seven() {
        let a = Fp::new(7);
        assert_eq!(a * a.inv().unwrap(), Fp::ONE);
    }

    #[test]
    fn minus_one_squared_via_bigint() {
        let m = Fp::new(MODULUS - 1);
        let expected = oracle_mul(MODULUS - 1, MODULUS - 1);
        assert_eq!(expected, 1);
        assert_eq!((m * m).value(), expected);
    }

    #[test]
    fn zero_has_no_inverse() {
        assert_eq!(Fp::ZERO.inv(), Err(AlgebraError::DivisionByZero));
    }

    #[test]
    fn generator_has_full_order_on_two_adic_part() {
        let w = Fp::two_adic_root(7);
        assert_eq!(w.pow(64), Fp::MINUS_ONE);
        assert_eq!(w.pow(128), Fp::ONE);
    }

    #[test]
    fn wide_reduction_matches_bigint() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut bytes = [0u8; 32];
            rand::RngCore::fill_bytes(&mut rng, &mut bytes);
            let expected = BigUint::from_bytes_le(&bytes) % big(MODULUS);
            let got = Fp::from_le_bytes_wide(&bytes);
            assert_eq!(big(got.value()), expected);
        }
    }

    #[test]
    fn reduction_edge_cases() {
        for (a, b) in [
            (MODULUS - 1, MODULUS - 1),
            (MODULUS - 1, 2),
            (EPSILON, EPSILON),
            (u32::MAX as u64 + 1, u32::MAX as u64 + 1),
            (MODULUS - 2, MODULUS - 3),
            (1 << 63, 1 << 63),
        ] {
            let (a, b) = (Fp::new(a), Fp::new(b));
            assert_eq!((a * b).value(), oracle_mul(a.value(), b.value()));
        }
        assert_eq!(Fp::new(MODULUS - 1) + Fp::new(MODULUS - 1), Fp::new(MODULUS - 2));
        assert_eq!(Fp::new(u64::MAX), Fp::new(u64::MAX - MODULUS));
    }

    proptest! {
        #[test]
        fn mul_matches_bigint(a in 0..MODULUS, b in 0..MODULUS) {
            prop_assert_eq!((Fp::new(a) * Fp::new(b)).value(), oracle_mul(a, b));
        }

        #[test]
        fn add_sub_match_bigint(a in 0..MODULUS, b in 0..MODULUS) {
            let sum: u64 = ((big(a) + big(b)) % big(MODULUS)).try_into().unwrap();
            prop_assert_eq!((Fp::new(a) + Fp::new(b)).value(), sum);
            let diff: u64 = ((big(a) + big(MODULUS) - big(b)) % big(MODULUS)).try_into().unwrap();
            prop_assert_eq!((Fp::new(a) - Fp::new(b)).value(), diff);
        }

        #[test]
        fn ring_axioms(a in 0..MODULUS, b in 0..MODULUS, c in 0..MODULUS) {
            let (a, b, c) = (Fp::new(a), Fp::new(b), Fp::new(c));
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!(a - a, Fp::ZERO);
        }

        #[test]
        fn inverse_law(a in 1..MODULUS) {
            let a = Fp::new(a);
            prop_assert_eq!(a * a.inv().unwrap(), Fp::ONE);
        }
    }
}
