use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::field::Fp;
use super::ntt::NttTable;
use super::AlgebraError;
use crate::encoding::{put_u64, Decode, DecodeError, Encode, Reader};

/// An element of the plaintext ring `R_t = Z_t[X]/(X^n + 1)` with `t = p`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingElement {
    coeffs: Vec<Fp>,
}

impl RingElement {
    pub fn zero(n: usize) -> Self {
        Self { coeffs: vec![Fp::ZERO; n] }
    }

    pub fn one(n: usize) -> Self {
        Self::constant(Fp::ONE, n)
    }

    pub fn constant(c: Fp, n: usize) -> Self {
        let mut coeffs = vec![Fp::ZERO; n];
        coeffs[0] = c;
        Self { coeffs }
    }

    /// `X^k` for `k < n`.
    pub fn monomial(k: usize, n: usize) -> Self {
        let mut coeffs = vec![Fp::ZERO; n];
        coeffs[k] = Fp::ONE;
        Self { coeffs }
    }

    pub fn from_coeffs(coeffs: Vec<Fp>) -> Result<Self, AlgebraError> {
        if !coeffs.len().is_power_of_two() {
            return Err(AlgebraError::InvalidParams("ring dimension must be a power of two"));
        }
        Ok(Self { coeffs })
    }

    pub fn random<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self { coeffs: (0..n).map(|_| Fp::random(rng)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Fp] {
        &self.coeffs
    }

    pub fn constant_term(&self) -> Fp {
        self.coeffs[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// True when all non-constant coefficients vanish, i.e. the element is
    /// the lift of a field element.
    pub fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|c| c.is_zero())
    }

    fn check_dim(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.dim() != other.dim() {
            return Err(AlgebraError::ParamMismatch {
                what: "ring dimension",
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.check_dim(other)?;
        Ok(self.add_unchecked(other))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.check_dim(other)?;
        Ok(Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| *a - *b).collect() })
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.check_dim(other)?;
        Ok(self.mul_ntt(other))
    }

    fn add_unchecked(&self, other: &Self) -> Self {
        Self { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| *a + *b).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "ring dimension mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += *b;
        }
    }

    /// `self += s * other`.
    pub fn add_scaled_assign(&mut self, s: Fp, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "ring dimension mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * *b;
        }
    }

    pub fn scale(&self, s: Fp) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| *c * s).collect() }
    }

    /// Product through the negacyclic NTT; constant operands short-circuit to
    /// a scalar multiplication.
    fn mul_ntt(&self, other: &Self) -> Self {
        if other.is_constant() {
            return self.scale(other.coeffs[0]);
        }
        if self.is_constant() {
            return other.scale(self.coeffs[0]);
        }
        let table = NttTable::get(self.dim());
        let mut a = self.coeffs.clone();
        let mut b = other.coeffs.clone();
        table.forward(&mut a);
        table.forward(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= *y;
        }
        table.inverse(&mut a);
        Self { coeffs: a }
    }

    /// Quadratic-time product with explicit `X^n = -1` wraparound. Kept as
    /// the reference path for the NTT.
    pub fn mul_schoolbook(&self, other: &Self) -> Result<Self, AlgebraError> {
        self.check_dim(other)?;
        let n = self.dim();
        let mut out = vec![Fp::ZERO; n];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                let k = i + j;
                if k < n {
                    out[k] += *a * *b;
                } else {
                    out[k - n] -= *a * *b;
                }
            }
        }
        Ok(Self { coeffs: out })
    }
}

impl fmt::Debug for RingElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            write!(f, "R[{}]", self.coeffs[0])
        } else {
            write!(f, "R{:?}", self.coeffs)
        }
    }
}

impl Add for &RingElement {
    type Output = RingElement;
    fn add(self, rhs: &RingElement) -> RingElement {
        self.checked_add(rhs).expect("ring dimension mismatch")
    }
}

impl Sub for &RingElement {
    type Output = RingElement;
    fn sub(self, rhs: &RingElement) -> RingElement {
        self.checked_sub(rhs).expect("ring dimension mismatch")
    }
}

impl Mul for &RingElement {
    type Output = RingElement;
    fn mul(self, rhs: &RingElement) -> RingElement {
        self.checked_mul(rhs).expect("ring dimension mismatch")
    }
}

impl Neg for &RingElement {
    type Output = RingElement;
    fn neg(self) -> RingElement {
        RingElement { coeffs: self.coeffs.iter().map(|c| -*c).collect() }
    }
}

impl Encode for RingElement {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u64(out, self.coeffs.len() as u64);
        for c in &self.coeffs {
            c.encode_to(out);
        }
    }
}

impl Decode for RingElement {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.len_prefix(8)?;
        if n == 0 || !n.is_power_of_two() {
            return Err(DecodeError::Invalid("ring dimension"));
        }
        let coeffs = (0..n).map(|_| Fp::decode_from(r)).collect::<Result<_, _>>()?;
        Ok(Self { coeffs })
    }
}
