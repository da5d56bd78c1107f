//! Plain-text sparse-triplet shape format.
//!
//! ```text
//! r1cs 1
//! dims <constraints> <witness> <public>
//! A
//! <row> <col> <value>
//! B
//! ...
//! C
//! ...
//! ```
//!
//! Columns index `Z = (W, x, u)`. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;

use super::{R1CSShape, RelationError};
use crate::algebra::{Fp, SparseMatrix};

pub fn write_triplets(shape: &R1CSShape) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "r1cs 1");
    let _ = writeln!(out, "dims {} {} {}", shape.num_constraints(), shape.num_witness(), shape.num_public());
    for (name, m) in [("A", shape.a()), ("B", shape.b()), ("C", shape.c())] {
        let _ = writeln!(out, "{name}");
        for (r, row) in m.rows().iter().enumerate() {
            for (c, v) in row {
                let _ = writeln!(out, "{r} {c} {v}");
            }
        }
    }
    out
}

fn parse_err(line: usize, msg: &str) -> RelationError {
    RelationError::Parse(format!("line {}: {msg}", line + 1))
}

pub fn read_triplets(text: &str) -> Result<R1CSShape, RelationError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, "r1cs 1")) => {}
        Some((i, _)) => return Err(parse_err(i, "expected header `r1cs 1`")),
        None => return Err(RelationError::Parse("empty input".into())),
    }
    let (i, dims) = lines.next().ok_or_else(|| RelationError::Parse("missing dims".into()))?;
    let nums: Vec<usize> = dims
        .strip_prefix("dims ")
        .ok_or_else(|| parse_err(i, "expected `dims`"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(i, "bad dimension")))
        .collect::<Result<_, _>>()?;
    let [m_c, num_w, num_x] = nums[..] else {
        return Err(parse_err(i, "expected three dimensions"));
    };
    let cols = num_w + num_x + 1;

    let mut mats: Vec<Vec<Vec<(usize, Fp)>>> = Vec::new();
    for (i, line) in lines {
        match line {
            "A" | "B" | "C" => {
                let expected = ["A", "B", "C"][mats.len().min(2)];
                if line != expected || mats.len() >= 3 {
                    return Err(parse_err(i, "sections must appear as A, B, C"));
                }
                mats.push(vec![Vec::new(); m_c]);
            }
            _ => {
                let current = mats.last_mut().ok_or_else(|| parse_err(i, "entry before section header"))?;
                let parts: Vec<&str> = line.split_whitespace().collect();
                let [r, c, v] = parts[..] else {
                    return Err(parse_err(i, "expected `row col value`"));
                };
                let r: usize = r.parse().map_err(|_| parse_err(i, "bad row"))?;
                let c: usize = c.parse().map_err(|_| parse_err(i, "bad column"))?;
                let v: u64 = v.parse().map_err(|_| parse_err(i, "bad value"))?;
                let v = Fp::from_canonical(v).ok_or_else(|| parse_err(i, "value not reduced"))?;
                if r >= m_c || c >= cols {
                    return Err(parse_err(i, "index out of range"));
                }
                current[r].push((c, v));
            }
        }
    }
    if mats.len() != 3 {
        return Err(RelationError::Parse("missing section".into()));
    }
    let mut it = mats.into_iter().map(|rows| SparseMatrix::from_rows(cols, rows).expect("validated above"));
    let (a, b, c) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    R1CSShape::new(num_w, num_x, a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::SyntheticRelation;

    #[test]
    fn roundtrip() {
        let rel = SyntheticRelation::generate(21, 9, 2);
        let text = write_triplets(rel.shape());
        assert_eq!(&read_triplets(&text).unwrap(), rel.shape());
    }

    #[test]
    fn hand_written_file() {
        let text = "r1cs 1\n# z0*z1=z2\ndims 1 3 0\nA\n0 0 1\nB\n0 1 1\nC\n0 2 1\n";
        let shape = read_triplets(text).unwrap();
        assert!(shape.check_r1cs(&[], &[Fp::new(2), Fp::new(3), Fp::new(6)]).unwrap());
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(read_triplets("").is_err());
        assert!(read_triplets("r1cs 2\n").is_err());
        assert!(read_triplets("r1cs 1\ndims 1 1 0\nA\n0 5 1\nB\nC\n").is_err());
        assert!(read_triplets("r1cs 1\ndims 1 1 0\nB\nA\nC\n").is_err());
        assert!(read_triplets("r1cs 1\ndims 1 1 0\nA\nB\n").is_err());
    }
}
