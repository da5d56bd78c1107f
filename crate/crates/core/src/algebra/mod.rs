//! Prime-field and polynomial-ring arithmetic.
//!
//! The protocol field is `F_p` with `p = 2^64 - 2^32 + 1`. Messages over the
//! field are lifted into the plaintext ring `R_t = Z_t[X]/(X^n + 1)` as
//! constant polynomials; with `t = p` the lift is an injective ring
//! homomorphism, so arithmetic on lifted values in `R_t` is field arithmetic.

mod field;
mod ntt;
mod ring;
mod sparse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use field::{add_vec, axpy, scale_vec, Fp, GENERATOR, MODULUS, TWO_ADICITY};
pub use ring::RingElement;
pub use sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{what} mismatch: {left} vs {right}")]
    ParamMismatch { what: &'static str, left: usize, right: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
}

/// Deployment-wide arithmetic parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgebraParams {
    /// Field modulus.
    pub p: u64,
    /// Plaintext modulus of `R_t`.
    pub t: u64,
    /// Ring dimension.
    pub n: usize,
    /// Bit size of the ciphertext modulus `q` used by the RLWE backend.
    pub q_bits: u32,
}

impl Default for AlgebraParams {
    fn default() -> Self {
        Self { p: MODULUS, t: MODULUS, n: 64, q_bits: 488 }
    }
}

impl AlgebraParams {
    pub fn with_dimension(n: usize) -> Self {
        Self { n, ..Self::default() }
    }

    /// Checks `p` is the supported prime, `p | t`, `n` is a power of two, the
    /// negacyclic NTT exists for `n`, and `q > t`.
    pub fn validate(&self) -> Result<(), AlgebraError> {
        if self.p != MODULUS {
            return Err(AlgebraError::InvalidParams("field modulus must be 2^64 - 2^32 + 1"));
        }
        if self.t == 0 || !self.t.is_multiple_of(self.p) {
            return Err(AlgebraError::InvalidParams("plaintext modulus must be a multiple of p"));
        }
        if self.n == 0 || !self.n.is_power_of_two() {
            return Err(AlgebraError::InvalidParams("ring dimension must be a power of two"));
        }
        if self.n.trailing_zeros() + 1 > TWO_ADICITY {
            return Err(AlgebraError::InvalidParams("ring dimension exceeds NTT support"));
        }
        if (self.q_bits as f64) <= (self.t as f64).log2() {
            return Err(AlgebraError::InvalidParams("ciphertext modulus must exceed t"));
        }
        Ok(())
    }
}

/// Constant-coefficient lift of a field element into `R_t`.
pub fn embed(f: Fp, n: usize) -> RingElement {
    RingElement::constant(f, n)
}

pub fn embed_vec(v: &[Fp], n: usize) -> Vec<RingElement> {
    v.iter().map(|f| embed(*f, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn default_params_are_valid() {
        AlgebraParams::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = AlgebraParams::default();
        p.n = 48;
        assert!(p.validate().is_err());
        let mut p = AlgebraParams::default();
        p.t = 12345;
        assert!(p.validate().is_err());
        let mut p = AlgebraParams::default();
        p.q_bits = 32;
        assert!(p.validate().is_err());
    }

    #[test]
    fn embed_zero_and_one() {
        assert!(embed(Fp::ZERO, 64).is_zero());
        assert_eq!(embed(Fp::ONE, 64), RingElement::one(64));
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = RingElement::random(64, &mut rng);
        assert_eq!(&a * &embed(Fp::ONE, 64), a);
    }

    #[test]
    fn embed_is_homomorphic() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = Fp::random(&mut rng);
            let b = Fp::random(&mut rng);
            let prod = &embed(a, 64) * &embed(b, 64);
            assert_eq!(prod.constant_term(), a * b);
            assert!(prod.is_constant());
            assert_eq!(&embed(a, 64) + &embed(b, 64), embed(a + b, 64));
        }
    }

    #[test]
    fn embed_is_injective() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = Fp::random(&mut rng);
            let b = Fp::random(&mut rng);
            assert_eq!(a == b, embed(a, 16) == embed(b, 16));
        }
    }
}
