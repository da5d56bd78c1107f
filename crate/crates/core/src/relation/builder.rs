//! Constraint-system builder that records the shape and the assignment in one
//! pass. Gadgets must allocate the same variables and constraints regardless
//! of the values they are fed, so the shape is value-independent.

use std::ops::Range;

use crate::algebra::{Fp, SparseMatrix};

use super::R1CSShape;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Witness(usize),
    Public(usize),
    One,
}

#[derive(Clone, Debug, Default)]
pub struct LinComb(Vec<(Var, Fp)>);

impl LinComb {
    pub fn zero() -> Self {
        Self(Vec::new())
    }

    pub fn constant(c: Fp) -> Self {
        Self(vec![(Var::One, c)])
    }

    pub fn term(v: Var, c: Fp) -> Self {
        Self(vec![(v, c)])
    }

    pub fn add(mut self, other: &LinComb) -> Self {
        self.0.extend_from_slice(&other.0);
        self
    }

    pub fn sub(mut self, other: &LinComb) -> Self {
        self.0.extend(other.0.iter().map(|(v, c)| (*v, -*c)));
        self
    }

    pub fn add_term(mut self, v: Var, c: Fp) -> Self {
        self.0.push((v, c));
        self
    }

    pub fn add_constant(self, c: Fp) -> Self {
        self.add_term(Var::One, c)
    }

    pub fn scale(mut self, s: Fp) -> Self {
        for (_, c) in &mut self.0 {
            *c *= s;
        }
        self
    }
}

impl From<Var> for LinComb {
    fn from(v: Var) -> Self {
        LinComb::term(v, Fp::ONE)
    }
}

#[derive(Default)]
pub struct ConstraintSystem {
    witness: Vec<Fp>,
    public: Vec<Fp>,
    constraints: Vec<(LinComb, LinComb, LinComb)>,
}

impl ConstraintSystem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Public inputs must all be allocated before anything reads their
    /// column index; the layout puts them after the witness block.
    pub fn alloc_public(&mut self, value: Fp) -> Var {
        self.public.push(value);
        Var::Public(self.public.len() - 1)
    }

    pub fn alloc(&mut self, value: Fp) -> Var {
        self.witness.push(value);
        Var::Witness(self.witness.len() - 1)
    }

    pub fn value(&self, v: Var) -> Fp {
        match v {
            Var::Witness(i) => self.witness[i],
            Var::Public(i) => self.public[i],
            Var::One => Fp::ONE,
        }
    }

    pub fn eval(&self, lc: &LinComb) -> Fp {
        lc.0.iter().map(|(v, c)| self.value(*v) * *c).sum()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Runs `f` and returns the range of constraint rows it emitted.
    pub fn section<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> (T, Range<usize>) {
        let start = self.constraints.len();
        let out = f(self);
        (out, start..self.constraints.len())
    }

    /// `a · b = c`.
    pub fn enforce(&mut self, a: LinComb, b: LinComb, c: LinComb) {
        self.constraints.push((a, b, c));
    }

    pub fn enforce_equal(&mut self, a: LinComb, b: LinComb) {
        self.enforce(a.sub(&b), LinComb::constant(Fp::ONE), LinComb::zero());
    }

    /// Allocates `a · b` and constrains it.
    pub fn mul(&mut self, a: &LinComb, b: &LinComb) -> Var {
        let out = self.alloc(self.eval(a) * self.eval(b));
        self.enforce(a.clone(), b.clone(), out.into());
        out
    }

    /// Allocates a boolean and constrains `b · b = b`.
    pub fn alloc_bit(&mut self, bit: bool) -> Var {
        let b = self.alloc(Fp::from(bit));
        self.enforce(b.into(), b.into(), b.into());
        b
    }

    /// Little-endian 64-bit decomposition with a recomposition constraint.
    pub fn to_bits(&mut self, x: &LinComb) -> Vec<Var> {
        let value = self.eval(x).value();
        let bits: Vec<Var> = (0..64).map(|k| self.alloc_bit((value >> k) & 1 == 1)).collect();
        let recomposed = bits
            .iter()
            .enumerate()
            .fold(LinComb::zero(), |acc, (k, b)| acc.add_term(*b, Fp::new(1u64 << k)));
        self.enforce_equal(recomposed, x.clone());
        bits
    }

    fn column(&self, v: Var) -> usize {
        match v {
            Var::Witness(i) => i,
            Var::Public(i) => self.witness.len() + i,
            Var::One => self.witness.len() + self.public.len(),
        }
    }

    fn matrix(&self, pick: impl Fn(&(LinComb, LinComb, LinComb)) -> &LinComb) -> SparseMatrix {
        let cols = self.witness.len() + self.public.len() + 1;
        let rows = self
            .constraints
            .iter()
            .map(|c| pick(c).0.iter().map(|(v, coeff)| (self.column(*v), *coeff)).collect())
            .collect();
        SparseMatrix::from_rows(cols, rows).expect("builder columns are in range")
    }

    pub fn shape(&self) -> R1CSShape {
        R1CSShape::new(
            self.witness.len(),
            self.public.len(),
            self.matrix(|c| &c.0),
            self.matrix(|c| &c.1),
            self.matrix(|c| &c.2),
        )
        .expect("builder produces consistent dimensions")
    }

    /// `(x, W)`.
    pub fn into_assignment(self) -> (Vec<Fp>, Vec<Fp>) {
        (self.public, self.witness)
    }
}
