use serde::{Deserialize, Serialize};

use super::field::Fp;
use super::AlgebraError;

/// Row-major sparse matrix over `F_p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMatrix {
    cols: usize,
    rows: Vec<Vec<(usize, Fp)>>,
}

impl SparseMatrix {
    pub fn new(num_rows: usize, cols: usize) -> Self {
        Self { cols, rows: vec![Vec::new(); num_rows] }
    }

    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, Fp)>>) -> Result<Self, AlgebraError> {
        if rows.iter().flatten().any(|(c, _)| *c >= cols) {
            return Err(AlgebraError::InvalidParams("column index out of range"));
        }
        let mut m = Self { cols, rows };
        m.normalize();
        Ok(m)
    }

    /// Merges duplicate columns, drops zeros, and sorts each row by column.
    fn normalize(&mut self) {
        for row in &mut self.rows {
            row.sort_by_key(|(c, _)| *c);
            let mut merged: Vec<(usize, Fp)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            merged.retain(|(_, v)| !v.is_zero());
            *row = merged;
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> &[Vec<(usize, Fp)>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn mul_vec(&self, z: &[Fp]) -> Result<Vec<Fp>, AlgebraError> {
        if z.len() != self.cols {
            return Err(AlgebraError::ParamMismatch {
                what: "matrix-vector length",
                left: self.cols,
                right: z.len(),
            });
        }
        Ok(self.rows.iter().map(|row| row.iter().map(|(c, v)| *v * z[*c]).sum()).collect())
    }

    /// Restricts to columns `[start, end)`, re-indexed from zero.
    pub fn column_block(&self, start: usize, end: usize) -> SparseMatrix {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|(c, _)| (start..end).contains(c))
                    .map(|(c, v)| (c - start, *v))
                    .collect()
            })
            .collect();
        SparseMatrix { cols: end - start, rows }
    }

    /// Largest row sum of centered absolute values, as `log2`; used for
    /// noise bounds.
    pub fn max_row_l1_log2(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(_, v)| v.centered().unsigned_abs() as f64).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1.0)
            .log2()
    }
}
