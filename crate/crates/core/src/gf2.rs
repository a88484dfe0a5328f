//! Dense matrices over GF(2).
//!
//! Entries are stored one per byte in row-major order. The codes handled here
//! are at most 127 columns wide, so no bit packing is needed for the algebra;
//! hot loops in [`crate::codes`] pack rows into `u128` words instead.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl Gf2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size, size);
        for i in 0..size {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds a matrix from row vectors. Every entry must be 0 or 1 and all rows
    /// must share one length.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::dim(cols, row.len()));
            }
            if let Some(&b) = row.iter().find(|&&b| b > 1) {
                return Err(Error::Parameter(format!("GF(2) entry must be 0 or 1, got {b}")));
            }
            bits.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            bits,
        })
    }

    /// Parses rows written as strings of `0`/`1` characters.
    pub fn from_strs<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let parsed = rows
            .iter()
            .map(|r| parse_bit_string(r.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&parsed)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.bits[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.bits[r * self.cols + c] = v & 1;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u8]> {
        self.bits.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Gf2Matrix) -> Result<Gf2Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::dim(self.cols, rhs.rows));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                if self.get(r, k) == 1 {
                    for c in 0..rhs.cols {
                        out.bits[r * rhs.cols + c] ^= rhs.get(k, c);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v · M`.
    pub fn vec_mul(&self, v: &[u8]) -> Result<Vec<u8>> {
        if v.len() != self.rows {
            return Err(Error::dim(self.rows, v.len()));
        }
        let mut out = vec![0u8; self.cols];
        for (r, &bit) in v.iter().enumerate() {
            if bit & 1 == 1 {
                for (o, &m) in out.iter_mut().zip(self.row(r)) {
                    *o ^= m;
                }
            }
        }
        Ok(out)
    }

    /// `v · Mᵀ`, i.e. the inner product of `v` with every row.
    pub fn mul_transposed(&self, v: &[u8]) -> Result<Vec<u8>> {
        if v.len() != self.cols {
            return Err(Error::dim(self.cols, v.len()));
        }
        Ok(self
            .iter_rows()
            .map(|row| row.iter().zip(v).fold(0u8, |acc, (&a, &b)| acc ^ (a & b)))
            .collect())
    }

    /// Reduced row echelon form and the pivot column of each nonzero row.
    pub fn rref(&self) -> (Gf2Matrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| m.get(i, c) == 1) else {
                continue;
            };
            m.swap_rows(r, p);
            for i in 0..m.rows {
                if i != r && m.get(i, c) == 1 {
                    m.xor_row_into(r, i);
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// A basis of `{ v : v · Mᵀ = 0 }`, one basis vector per row.
    pub fn null_space(&self) -> Gf2Matrix {
        let (reduced, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut basis = Gf2Matrix::zeros(free.len(), self.cols);
        for (b, &f) in free.iter().enumerate() {
            basis.set(b, f, 1);
            for (pr, &pc) in pivots.iter().enumerate() {
                if reduced.get(pr, f) == 1 {
                    basis.set(b, pc, 1);
                }
            }
        }
        basis
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.bits.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    fn xor_row_into(&mut self, src: usize, dst: usize) {
        for c in 0..self.cols {
            let v = self.bits[src * self.cols + c];
            self.bits[dst * self.cols + c] ^= v;
        }
    }
}

impl fmt::Debug for Gf2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Gf2Matrix {}x{}", self.rows, self.cols)?;
        for row in self.iter_rows() {
            writeln!(f, "  {}", bits_to_string(row))?;
        }
        Ok(())
    }
}

pub fn parse_bit_string(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::Parameter(format!("expected '0' or '1', got {other:?}"))),
        })
        .collect()
}

pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}

pub fn hamming_weight(bits: &[u8]) -> usize {
    bits.iter().filter(|&&b| b == 1).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_identity_and_zero() {
        assert_eq!(Gf2Matrix::identity(5).rank(), 5);
        assert_eq!(Gf2Matrix::zeros(3, 4).rank(), 0);
    }

    #[test]
    fn rank_detects_dependent_rows() {
        let m = Gf2Matrix::from_strs(&["1100", "0110", "1010"]).unwrap();
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn null_space_is_orthogonal_and_complete() {
        let h = Gf2Matrix::from_strs(&["01011001", "11100100", "00100111", "10011010"]).unwrap();
        let ns = h.null_space();
        assert_eq!(ns.rows() + h.rank(), h.cols());
        for row in ns.iter_rows() {
            assert!(h.mul_transposed(row).unwrap().iter().all(|&b| b == 0));
        }
        assert_eq!(ns.rank(), ns.rows());
    }

    #[test]
    fn rejects_non_binary_entries() {
        assert!(Gf2Matrix::from_rows(&[vec![0u8, 2]]).is_err());
        assert!(Gf2Matrix::from_strs(&["01x"]).is_err());
    }

    #[test]
    fn ragged_rows_are_a_dimension_error() {
        let err = Gf2Matrix::from_rows(&[vec![0u8, 1], vec![1]]).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 2, actual: 1 }));
    }

    #[test]
    fn mul_matches_vec_mul() {
        let a = Gf2Matrix::from_strs(&["101", "011"]).unwrap();
        let b = Gf2Matrix::from_strs(&["1100", "0110", "0011"]).unwrap();
        let prod = a.mul(&b).unwrap();
        for r in 0..a.rows() {
            assert_eq!(prod.row(r), b.vec_mul(a.row(r)).unwrap().as_slice());
        }
    }
}
