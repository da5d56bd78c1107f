//! R1CS shapes, relaxed and committed-relaxed satisfaction, and client-side
//! instance generation.

pub mod builder;
pub mod phc;
pub mod synthetic;
mod triplet;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Fp, RingElement, SparseMatrix};
use crate::commit::{commit_field, gen_params, CommitError, CommitParams, Commitment, Label, DEFAULT_K, DEFAULT_L};
use crate::encoding::{put_seq, put_u64, Decode, DecodeError, Digest32, Domain, Encode, Hasher, Reader};
use crate::mlsags::PublicKey as SeedPublicKey;

pub use phc::{build_phc_relation, phc_assignment, Issuer, Phc, PhcLayout, ToyPublicKey, ToySecretKey, ToySignature};
pub use synthetic::SyntheticRelation;
pub use triplet::{read_triplets, write_triplets};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("{what} mismatch: expected {expected}, got {got}")]
    ParamMismatch { what: &'static str, expected: usize, got: usize },
    #[error("assignment does not satisfy the relation")]
    NotSatisfied,
    #[error("credential hash does not match the instance's public input")]
    InconsistentCredential,
    #[error("malformed shape file: {0}")]
    Parse(String),
    #[error(transparent)]
    Commit(#[from] CommitError),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), RelationError> {
    if expected != got {
        return Err(RelationError::ParamMismatch { what, expected, got });
    }
    Ok(())
}

/// Constraint matrices over `Z = (W, x, u)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct R1CSShape {
    num_w: usize,
    num_x: usize,
    a: SparseMatrix,
    b: SparseMatrix,
    c: SparseMatrix,
}

impl R1CSShape {
    pub fn new(num_w: usize, num_x: usize, a: SparseMatrix, b: SparseMatrix, c: SparseMatrix) -> Result<Self, RelationError> {
        let cols = num_w + num_x + 1;
        for m in [&a, &b, &c] {
            check_len("matrix columns", cols, m.num_cols())?;
        }
        check_len("B rows", a.num_rows(), b.num_rows())?;
        check_len("C rows", a.num_rows(), c.num_rows())?;
        Ok(Self { num_w, num_x, a, b, c })
    }

    pub fn num_constraints(&self) -> usize {
        self.a.num_rows()
    }
    pub fn num_witness(&self) -> usize {
        self.num_w
    }
    pub fn num_public(&self) -> usize {
        self.num_x
    }
    pub fn z_len(&self) -> usize {
        self.num_w + self.num_x + 1
    }
    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }
    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }
    pub fn c(&self) -> &SparseMatrix {
        &self.c
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Hasher::new(Domain::Shape);
        h.encoded(self);
        h.finish()
    }

    /// `Z = (W, x, u)`.
    pub fn z(&self, x: &[Fp], u: Fp, w: &[Fp]) -> Result<Vec<Fp>, RelationError> {
        check_len("public input length", self.num_x, x.len())?;
        check_len("witness length", self.num_w, w.len())?;
        let mut z = Vec::with_capacity(self.z_len());
        z.extend_from_slice(w);
        z.extend_from_slice(x);
        z.push(u);
        Ok(z)
    }

    /// `(AZ, BZ, CZ)`.
    pub fn products(&self, z: &[Fp]) -> Result<(Vec<Fp>, Vec<Fp>, Vec<Fp>), RelationError> {
        let map = |e| match e {
            crate::algebra::AlgebraError::ParamMismatch { left, right, .. } => {
                RelationError::ParamMismatch { what: "Z length", expected: left, got: right }
            }
            _ => RelationError::NotSatisfied,
        };
        Ok((self.a.mul_vec(z).map_err(map)?, self.b.mul_vec(z).map_err(map)?, self.c.mul_vec(z).map_err(map)?))
    }

    /// `(AZ)∘(BZ) - u·CZ`; equals `E` exactly when the relaxed relation holds.
    pub fn relaxed_residual(&self, x: &[Fp], u: Fp, w: &[Fp]) -> Result<Vec<Fp>, RelationError> {
        let z = self.z(x, u, w)?;
        let (az, bz, cz) = self.products(&z)?;
        Ok(az.iter().zip(&bz).zip(&cz).map(|((a, b), c)| *a * *b - u * *c).collect())
    }

    pub fn check_relaxed(&self, x: &[Fp], u: Fp, w: &[Fp], e: &[Fp]) -> Result<bool, RelationError> {
        check_len("error vector length", self.num_constraints(), e.len())?;
        Ok(self.relaxed_residual(x, u, w)? == e)
    }

    pub fn check_r1cs(&self, x: &[Fp], w: &[Fp]) -> Result<bool, RelationError> {
        Ok(self.unsatisfied_rows(x, w)?.is_empty())
    }

    /// Rows violating `(AZ)∘(BZ) = CZ` with `u = 1`.
    pub fn unsatisfied_rows(&self, x: &[Fp], w: &[Fp]) -> Result<Vec<usize>, RelationError> {
        let r = self.relaxed_residual(x, Fp::ONE, w)?;
        Ok(r.iter().enumerate().filter(|(_, v)| !v.is_zero()).map(|(i, _)| i).collect())
    }

    /// Column blocks `(M_W, M_x, M_u)` of a matrix.
    pub fn split_columns(&self, m: &SparseMatrix) -> (SparseMatrix, SparseMatrix, SparseMatrix) {
        let (w, x) = (self.num_w, self.num_x);
        (m.column_block(0, w), m.column_block(w, w + x), m.column_block(w + x, w + x + 1))
    }
}

impl Encode for SparseMatrix {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u64(out, self.num_cols() as u64);
        put_u64(out, self.num_rows() as u64);
        for row in self.rows() {
            put_u64(out, row.len() as u64);
            for (c, v) in row {
                put_u64(out, *c as u64);
                v.encode_to(out);
            }
        }
    }
}

impl Decode for SparseMatrix {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let cols = r.u64()? as usize;
        let num_rows = r.len_prefix(8)?;
        let mut rows = Vec::with_capacity(num_rows);
        for _ in 0..num_rows {
            let len = r.len_prefix(16)?;
            let mut row = Vec::with_capacity(len);
            for _ in 0..len {
                row.push((r.u64()? as usize, Fp::decode_from(r)?));
            }
            rows.push(row);
        }
        SparseMatrix::from_rows(cols, rows).map_err(|_| DecodeError::Invalid("sparse matrix"))
    }
}

impl Encode for R1CSShape {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_u64(out, self.num_w as u64);
        put_u64(out, self.num_x as u64);
        self.a.encode_to(out);
        self.b.encode_to(out);
        self.c.encode_to(out);
    }
}

impl Decode for R1CSShape {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let num_w = r.u64()? as usize;
        let num_x = r.u64()? as usize;
        let (a, b, c) = (SparseMatrix::decode_from(r)?, SparseMatrix::decode_from(r)?, SparseMatrix::decode_from(r)?);
        R1CSShape::new(num_w, num_x, a, b, c).map_err(|_| DecodeError::Invalid("shape dimensions"))
    }
}

/// Commitment parameters for the error, witness, and cross-term vectors of
/// one shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitKeys {
    pub e: CommitParams,
    pub w: CommitParams,
    pub t: CommitParams,
}

impl CommitKeys {
    pub fn generate(seed: &[u8], shape: &R1CSShape, ring_dim: usize) -> Result<Self, RelationError> {
        let m_c = shape.num_constraints().max(1);
        let m_w = shape.num_witness().max(1);
        Ok(Self {
            e: gen_params(seed, Label::E, DEFAULT_K, DEFAULT_L, m_c, ring_dim)?,
            w: gen_params(seed, Label::W, DEFAULT_K, DEFAULT_L, m_w, ring_dim)?,
            t: gen_params(seed, Label::T, DEFAULT_K, DEFAULT_L, m_c, ring_dim)?,
        })
    }

    pub fn ring_dim(&self) -> usize {
        self.e.ring_dim()
    }
}

/// `(Ē, u, W̄, x)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedRelaxedInstance {
    pub e_bar: Commitment,
    pub u: Fp,
    pub w_bar: Commitment,
    pub x: Vec<Fp>,
}

/// `(E, r_E, W, r_W)`. Secret material; deliberately not `Debug`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedRelaxedWitness {
    pub e: Vec<Fp>,
    pub r_e: Vec<RingElement>,
    pub w: Vec<Fp>,
    pub r_w: Vec<RingElement>,
}

impl std::fmt::Debug for CommittedRelaxedWitness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CommittedRelaxedWitness(|E|={}, |W|={})", self.e.len(), self.w.len())
    }
}

impl Encode for CommittedRelaxedInstance {
    fn encode_to(&self, out: &mut Vec<u8>) {
        self.e_bar.encode_to(out);
        self.u.encode_to(out);
        self.w_bar.encode_to(out);
        put_seq(out, &self.x);
    }
}

impl Decode for CommittedRelaxedInstance {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            e_bar: Commitment::decode_from(r)?,
            u: Fp::decode_from(r)?,
            w_bar: Commitment::decode_from(r)?,
            x: crate::encoding::get_seq(r, 8)?,
        })
    }
}

impl Encode for CommittedRelaxedWitness {
    fn encode_to(&self, out: &mut Vec<u8>) {
        put_seq(out, &self.e);
        put_seq(out, &self.r_e);
        put_seq(out, &self.w);
        put_seq(out, &self.r_w);
    }
}

impl Decode for CommittedRelaxedWitness {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        use crate::encoding::get_seq;
        Ok(Self { e: get_seq(r, 8)?, r_e: get_seq(r, 16)?, w: get_seq(r, 8)?, r_w: get_seq(r, 16)? })
    }
}

/// Client-side instance generation: fresh `r_E`, `r_W`; `E = 0`; `u = 1`.
pub fn client_generate<R: RngCore + ?Sized>(
    shape: &R1CSShape,
    x: &[Fp],
    w: &[Fp],
    keys: &CommitKeys,
    rng: &mut R,
) -> Result<(CommittedRelaxedInstance, CommittedRelaxedWitness), RelationError> {
    if !shape.check_r1cs(x, w)? {
        return Err(RelationError::NotSatisfied);
    }
    generate_unchecked(shape, x, w, keys, rng)
}

/// Same as [`client_generate`] without the satisfiability gate. Used to model
/// a client that submits a bad witness.
pub fn generate_unchecked<R: RngCore + ?Sized>(
    shape: &R1CSShape,
    x: &[Fp],
    w: &[Fp],
    keys: &CommitKeys,
    rng: &mut R,
) -> Result<(CommittedRelaxedInstance, CommittedRelaxedWitness), RelationError> {
    check_len("public input length", shape.num_public(), x.len())?;
    check_len("witness length", shape.num_witness(), w.len())?;
    let e = vec![Fp::ZERO; shape.num_constraints()];
    let r_e = keys.e.random_randomness(rng);
    let r_w = keys.w.random_randomness(rng);
    let instance = CommittedRelaxedInstance {
        e_bar: commit_field(&keys.e, &e, &r_e)?,
        u: Fp::ONE,
        w_bar: commit_field(&keys.w, &padded(w, keys.w.m()), &r_w)?,
        x: x.to_vec(),
    };
    Ok((instance, CommittedRelaxedWitness { e, r_e, w: w.to_vec(), r_w }))
}

/// Shapes with no witness still commit to a length-1 vector.
fn padded(v: &[Fp], m: usize) -> Vec<Fp> {
    let mut out = v.to_vec();
    out.resize(m, Fp::ZERO);
    out
}

pub fn commit_error(keys: &CommitKeys, e: &[Fp], r_e: &[RingElement]) -> Result<Commitment, RelationError> {
    Ok(commit_field(&keys.e, &padded(e, keys.e.m()), r_e)?)
}

pub fn commit_witness(keys: &CommitKeys, w: &[Fp], r_w: &[RingElement]) -> Result<Commitment, RelationError> {
    Ok(commit_field(&keys.w, &padded(w, keys.w.m()), r_w)?)
}

pub fn commit_cross_term(keys: &CommitKeys, t: &[Fp], r_t: &[RingElement]) -> Result<Commitment, RelationError> {
    Ok(commit_field(&keys.t, &padded(t, keys.t.m()), r_t)?)
}

/// Outcome of the committed relaxed R1CS check, clause by clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct C1Report {
    pub error_opening: bool,
    pub witness_opening: bool,
    pub relaxed: bool,
    pub failure: Option<String>,
}

impl C1Report {
    pub fn holds(&self) -> bool {
        self.error_opening && self.witness_opening && self.relaxed
    }
}

pub fn check_c1_report(
    shape: &R1CSShape,
    instance: &CommittedRelaxedInstance,
    witness: &CommittedRelaxedWitness,
    keys: &CommitKeys,
) -> C1Report {
    let mut failure = None;
    let error_opening = match commit_error(keys, &witness.e, &witness.r_e) {
        Ok(c) if shape.num_constraints() == witness.e.len() => c == instance.e_bar,
        Ok(_) => false,
        Err(e) => {
            failure = Some(format!("error opening: {e}"));
            false
        }
    };
    let witness_opening = match commit_witness(keys, &witness.w, &witness.r_w) {
        Ok(c) if shape.num_witness() == witness.w.len() => c == instance.w_bar,
        Ok(_) => false,
        Err(e) => {
            failure.get_or_insert(format!("witness opening: {e}"));
            false
        }
    };
    let relaxed = match shape.check_relaxed(&instance.x, instance.u, &witness.w, &witness.e) {
        Ok(ok) => ok,
        Err(e) => {
            failure.get_or_insert(format!("relaxed check: {e}"));
            false
        }
    };
    if failure.is_none() {
        if !error_opening {
            failure = Some("Ē does not open to (E, r_E)".into());
        } else if !witness_opening {
            failure = Some("W̄ does not open to (W, r_W)".into());
        } else if !relaxed {
            failure = Some("relaxed R1CS equation violated".into());
        }
    }
    if let Some(f) = &failure {
        tracing::debug!(reason = %f, "C1 check failed");
    }
    C1Report { error_opening, witness_opening, relaxed, failure }
}

/// Committed relaxed R1CS check: both openings and the relaxed equation.
pub fn check_c1(
    shape: &R1CSShape,
    instance: &CommittedRelaxedInstance,
    witness: &CommittedRelaxedWitness,
    keys: &CommitKeys,
) -> bool {
    check_c1_report(shape, instance, witness, keys).holds()
}

/// `(hash_PHC, pk_seed, 𝓘, 𝓦)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResCredential {
    pub hash_phc: Fp,
    pub pk_seed: SeedPublicKey,
    pub instance: CommittedRelaxedInstance,
    pub witness: CommittedRelaxedWitness,
}

pub fn make_res_credential(
    phc: &Phc,
    instance: CommittedRelaxedInstance,
    witness: CommittedRelaxedWitness,
    pk_seed: SeedPublicKey,
) -> Result<ResCredential, RelationError> {
    let hash_phc = phc.hash();
    if instance.x.get(phc::X_HASH_PHC) != Some(&hash_phc) {
        return Err(RelationError::InconsistentCredential);
    }
    Ok(ResCredential { hash_phc, pk_seed, instance, witness })
}
