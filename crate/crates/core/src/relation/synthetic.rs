//! Seeded random R1CS shapes with a sequential witness generator: row `k`
//! constrains `W_k = (a_k·Z)(b_k·Z)` where `a_k`, `b_k` read only the public
//! inputs, the constant slot, and earlier witness entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::R1CSShape;
use crate::algebra::{Fp, SparseMatrix};

#[derive(Clone, Debug)]
pub struct SyntheticRelation {
    shape: R1CSShape,
}

const TERMS_PER_ROW: usize = 3;

impl SyntheticRelation {
    pub fn generate(seed: u64, num_constraints: usize, num_public: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let num_w = num_constraints;
        let cols = num_w + num_public + 1;
        let mut a = Vec::with_capacity(num_constraints);
        let mut b = Vec::with_capacity(num_constraints);
        let mut c = Vec::with_capacity(num_constraints);
        for k in 0..num_constraints {
            // Readable columns: W_0..W_{k-1}, then the public block and `u`.
            let readable: Vec<usize> = (0..k).chain(num_w..cols).collect();
            let mut row = || -> Vec<(usize, Fp)> {
                (0..TERMS_PER_ROW)
                    .map(|_| (readable[rng.gen_range(0..readable.len())], Fp::random(&mut rng)))
                    .collect()
            };
            a.push(row());
            b.push(row());
            c.push(vec![(k, Fp::ONE)]);
        }
        let shape = R1CSShape::new(
            num_w,
            num_public,
            SparseMatrix::from_rows(cols, a).expect("columns in range"),
            SparseMatrix::from_rows(cols, b).expect("columns in range"),
            SparseMatrix::from_rows(cols, c).expect("columns in range"),
        )
        .expect("consistent dimensions");
        Self { shape }
    }

    pub fn shape(&self) -> &R1CSShape {
        &self.shape
    }

    /// The unique witness satisfying the shape for public input `x`.
    pub fn assign(&self, x: &[Fp]) -> Vec<Fp> {
        let num_w = self.shape.num_witness();
        let mut z = vec![Fp::ZERO; self.shape.z_len()];
        z[num_w..num_w + x.len()].copy_from_slice(x);
        z[num_w + x.len()] = Fp::ONE;
        for k in 0..num_w {
            let dot = |row: &[(usize, Fp)]| -> Fp { row.iter().map(|(c, v)| *v * z[*c]).sum() };
            z[k] = dot(&self.shape.a().rows()[k]) * dot(&self.shape.b().rows()[k]);
        }
        z.truncate(num_w);
        z
    }
}
