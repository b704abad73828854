//! Chunked accumulation of per-party statistics.
//!
//! Each party streams its rows in chunks of any size and folds them into
//! running sums: column totals, row count, and the Gram matrix (or the
//! centered Gram once a mean is fixed). All folds are exact integer-free
//! float additions performed row by row, so the result is bit-identical for
//! every chunking of the same row sequence, chunk size 1 through the whole
//! file.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum IngestError {
    /// A row had the wrong number of fields.
    DimensionMismatch { line: usize, expected: usize, found: usize },
    /// A field failed to parse as a real number.
    Parse { line: usize, field: String },
    /// A value exceeded the declared magnitude bound.
    OutOfRange { line: usize, value: f64, max_abs: f64 },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::DimensionMismatch { line, expected, found } => {
                write!(f, "line {line}: expected {expected} fields, found {found}")
            }
            IngestError::Parse { line, field } => {
                write!(f, "line {line}: cannot parse '{field}' as a number")
            }
            IngestError::OutOfRange { line, value, max_abs } => {
                write!(f, "line {line}: |{value}| exceeds bound {max_abs}")
            }
        }
    }
}

/// Running per-party statistics over `dim` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    dim: usize,
    /// Magnitude bound every ingested value must respect.
    pub max_abs: f64,
    column_sum: Vec<f64>,
    total_lines: u64,
    gram: Matrix,
}

impl Accumulator {
    pub fn new(dim: usize, max_abs: f64) -> Accumulator {
        assert!(dim > 0 && max_abs > 0.0);
        Accumulator {
            dim,
            max_abs,
            column_sum: alloc::vec![0.0; dim],
            total_lines: 0,
            gram: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_lines(&self) -> u64 {
        self.total_lines
    }

    pub fn column_sum(&self) -> Matrix {
        Matrix::from_vec(1, self.dim, self.column_sum.clone())
    }

    /// Accumulated X^T X over all ingested rows.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    /// Folds one row. `line` is only used for error reporting.
    pub fn push_row(&mut self, row: &[f64], line: usize) -> Result<(), IngestError> {
        if row.len() != self.dim {
            return Err(IngestError::DimensionMismatch {
                line,
                expected: self.dim,
                found: row.len(),
            });
        }
        for &v in row {
            if !v.is_finite() || libm::fabs(v) > self.max_abs {
                return Err(IngestError::OutOfRange { line, value: v, max_abs: self.max_abs });
            }
        }
        for (s, &v) in self.column_sum.iter_mut().zip(row) {
            *s += v;
        }
        // Row-by-row rank-1 update keeps the fold order independent of how
        // the stream was chunked.
        for i in 0..self.dim {
            for j in 0..self.dim {
                let cur = self.gram.get(i, j);
                self.gram.set(i, j, cur + row[i] * row[j]);
            }
        }
        self.total_lines += 1;
        Ok(())
    }

    /// Folds a chunk of rows.
    pub fn push_chunk(&mut self, rows: &Matrix, first_line: usize) -> Result<(), IngestError> {
        for i in 0..rows.rows {
            self.push_row(rows.row(i), first_line + i)?;
        }
        Ok(())
    }

    /// Centered Gram (X - 1 mu)^T (X - 1 mu) from the raw sums:
    /// G - n (mu^T s + s^T mu) ... expanded exactly as
    /// G - s^T mu - mu^T s + n mu^T mu, with s the 1 x d column-sum row.
    pub fn centered_gram(&self, mean: &Matrix) -> Matrix {
        assert_eq!(mean.cols, self.dim);
        let n = self.total_lines as f64;
        let mut out = self.gram.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = out.get(i, j) - self.column_sum[i] * mean.get(0, j)
                    - mean.get(0, i) * self.column_sum[j]
                    + n * mean.get(0, i) * mean.get(0, j);
                out.set(i, j, v);
            }
        }
        out
    }
}

/// Parses one CSV line of `dim` comma-separated reals.
pub fn parse_csv_row(text: &str, dim: usize, line: usize) -> Result<Vec<f64>, IngestError> {
    let trimmed = text.trim();
    let mut out = Vec::with_capacity(dim);
    for field in trimmed.split(',') {
        let field = field.trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => {
                return Err(IngestError::Parse { line, field: String::from(field) });
            }
        }
    }
    if out.len() != dim {
        return Err(IngestError::DimensionMismatch { line, expected: dim, found: out.len() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_matrix() -> Matrix {
        // 4 x 4 with entries 1..16 row-major.
        Matrix::from_vec(4, 4, (1..=16).map(|k| k as f64).collect())
    }

    #[test]
    fn gram_of_block_matrix() {
        let m = block_matrix();
        let mut acc = Accumulator::new(4, 20.0);
        acc.push_chunk(&m, 1).unwrap();
        assert_eq!(acc.gram().get(0, 0), 276.0);
        assert_eq!(acc.gram().row(0), &[276.0, 304.0, 332.0, 360.0]);
        assert_eq!(acc.total_lines(), 4);
        assert_eq!(acc.column_sum().row(0), &[28.0, 32.0, 36.0, 40.0]);
    }

    #[test]
    fn split_grams_sum_to_pooled_gram() {
        // First two rows and last two rows accumulated separately.
        let m = block_matrix();
        let top = Matrix::from_vec(2, 4, m.data[..8].to_vec());
        let bottom = Matrix::from_vec(2, 4, m.data[8..].to_vec());
        let mut a = Accumulator::new(4, 20.0);
        let mut b = Accumulator::new(4, 20.0);
        a.push_chunk(&top, 1).unwrap();
        b.push_chunk(&bottom, 3).unwrap();
        assert_eq!(a.gram().row(0), &[26.0, 32.0, 38.0, 44.0]);
        assert_eq!(b.gram().row(0), &[250.0, 272.0, 294.0, 316.0]);
        let pooled = a.gram().add(b.gram());
        let mut whole = Accumulator::new(4, 20.0);
        whole.push_chunk(&m, 1).unwrap();
        assert_eq!(&pooled, whole.gram());
    }

    #[test]
    fn chunking_is_invariant() {
        // 23 pseudo-random rows folded with chunk sizes 1, 7, 100 and all
        // at once give bit-identical accumulators.
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 8.0
        };
        let rows: Vec<Vec<f64>> = (0..23).map(|_| (0..3).map(|_| next()).collect()).collect();
        let fold = |chunk: usize| {
            let mut acc = Accumulator::new(3, 10.0);
            let mut line = 1;
            for block in rows.chunks(chunk) {
                for r in block {
                    acc.push_row(r, line).unwrap();
                    line += 1;
                }
            }
            acc
        };
        let whole = fold(usize::MAX);
        for chunk in [1usize, 7, 100] {
            assert_eq!(fold(chunk), whole);
        }
    }

    #[test]
    fn centered_gram_matches_direct_computation() {
        let m = block_matrix();
        let mut acc = Accumulator::new(4, 20.0);
        acc.push_chunk(&m, 1).unwrap();
        let mean = Matrix::from_vec(1, 4, alloc::vec![7.0, 8.0, 9.0, 10.0]);
        let centered = acc.centered_gram(&mean);
        // Direct: subtract the mean from every row, then X^T X.
        let mut shifted = m.clone();
        for i in 0..4 {
            for j in 0..4 {
                shifted.set(i, j, m.get(i, j) - mean.get(0, j));
            }
        }
        let direct = shifted.transpose().matmul(&shifted);
        for i in 0..4 {
            for j in 0..4 {
                assert!((centered.get(i, j) - direct.get(i, j)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_row_parsing() {
        assert_eq!(parse_csv_row("1.5, -2,0.25", 3, 4).unwrap(), alloc::vec![1.5, -2.0, 0.25]);
        assert_eq!(
            parse_csv_row("1,2", 3, 9).unwrap_err(),
            IngestError::DimensionMismatch { line: 9, expected: 3, found: 2 }
        );
        assert!(matches!(
            parse_csv_row("1,x,3", 3, 2).unwrap_err(),
            IngestError::Parse { line: 2, .. }
        ));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut acc = Accumulator::new(2, 5.0);
        let err = acc.push_row(&[1.0, 7.5], 3).unwrap_err();
        assert!(matches!(err, IngestError::OutOfRange { line: 3, .. }));
    }
}
