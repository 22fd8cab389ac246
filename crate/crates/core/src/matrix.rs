//! Dense matrices over a prime field.
//!
//! Everything here is exact Gaussian elimination. Pivots are the first
//! nonzero entry in the column; row operations skip zero entries of the pivot
//! row, which keeps elimination cheap when many rows are coordinate selectors.

use std::fmt;

use thiserror::Error;

use crate::ff::{Fe, FieldRng, PrimeField};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("linear system is inconsistent")]
    Inconsistent,
    #[error("no full-rank {rows}x{cols} sample after {attempts} attempts")]
    AttemptsExhausted { rows: usize, cols: usize, attempts: usize },
    #[error("matrices live in different fields (q = {0} vs {1})")]
    FieldMismatch(u64, u64),
}

/// Row-major dense matrix over `field`.
#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    data: Vec<Fe>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} over F_{}", self.rows, self.cols, self.field.modulus())?;
        for r in 0..self.rows {
            let row: Vec<_> = self.row(r).iter().map(|x| self.field.centered(*x)).collect();
            writeln!(f, "  {row:?}")?;
        }
        Ok(())
    }
}

/// Result of reducing a matrix to reduced row echelon form.
struct Echelon {
    reduced: Matrix,
    pivots: Vec<usize>,
}

impl Matrix {
    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self { field, rows, cols, data: vec![Fe::ZERO; rows * cols] }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.set(i, i, Fe::ONE);
        }
        m
    }

    pub fn from_rows(field: PrimeField, rows: usize, cols: usize, data: Vec<Fe>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { field, rows, cols, data })
    }

    /// Build from signed integers, reducing each entry mod q.
    pub fn from_i64(field: PrimeField, rows: &[Vec<i64>]) -> Result<Self, MatrixError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(MatrixError::DimensionMismatch(format!(
                "ragged rows: {} vs {cols}",
                bad.len()
            )));
        }
        let data = rows.iter().flatten().map(|&v| field.from_i64(v)).collect();
        Ok(Self { field, rows: rows.len(), cols, data })
    }

    /// I.i.d. uniform entries.
    pub fn random(field: PrimeField, rows: usize, cols: usize, rng: &mut FieldRng) -> Self {
        let data = (0..rows * cols).map(|_| field.sample(rng)).collect();
        Self { field, rows, cols, data }
    }

    /// Uniform sample conditioned on rank `min(rows, cols)`, by rejection.
    pub fn random_full_rank(
        field: PrimeField,
        rows: usize,
        cols: usize,
        rng: &mut FieldRng,
        max_attempts: usize,
    ) -> Result<Self, MatrixError> {
        for _ in 0..max_attempts {
            let m = Self::random(field, rows, cols, rng);
            if m.rank() == rows.min(cols) {
                return Ok(m);
            }
        }
        Err(MatrixError::AttemptsExhausted { rows, cols, attempts: max_attempts })
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Fe {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Fe) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Fe] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn entries(&self) -> &[Fe] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Fe> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    fn same_field(&self, other: &Matrix) -> Result<(), MatrixError> {
        if self.field != other.field {
            return Err(MatrixError::FieldMismatch(self.field.modulus(), other.field.modulus()));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(other)?;
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let mut out = Matrix::zeros(f, self.rows, other.cols);
        // acc + a*b < q + q^2 < 2^64 since q < 2^32
        let q = f.modulus();
        for r in 0..self.rows {
            let mut acc = vec![0u64; other.cols];
            for (k, a) in self.row(r).iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (c, b) in other.row(k).iter().enumerate() {
                    acc[c] = (acc[c] + a.value() * b.value()) % q;
                }
            }
            for (c, v) in acc.into_iter().enumerate() {
                out.set(r, c, Fe::from_reduced(v));
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(other)?;
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f.add(*a, *b)).collect();
        Ok(Matrix { data, ..*self })
    }

    pub fn scale(&self, k: Fe) -> Matrix {
        let f = self.field;
        Matrix { data: self.data.iter().map(|x| f.mul(*x, k)).collect(), ..*self }
    }

    pub fn vstack(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        Matrix::vstack_all(self.field, self.cols, [self, other])
    }

    /// Stack any number of blocks with `cols` columns; empty input gives a
    /// `0 x cols` matrix.
    pub fn vstack_all<'a>(
        field: PrimeField,
        cols: usize,
        blocks: impl IntoIterator<Item = &'a Matrix>,
    ) -> Result<Matrix, MatrixError> {
        let mut out = Matrix::zeros(field, 0, cols);
        for b in blocks {
            out.same_field(b)?;
            if b.cols != cols {
                return Err(MatrixError::DimensionMismatch(format!(
                    "vstack of {} columns onto {cols}",
                    b.cols
                )));
            }
            out.data.extend_from_slice(&b.data);
            out.rows += b.rows;
        }
        Ok(out)
    }

    pub fn hstack(&self, other: &Matrix) -> Result<Matrix, MatrixError> {
        self.same_field(other)?;
        if self.rows != other.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "hstack of {} rows beside {}",
                other.rows, self.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(Matrix { field: self.field, rows: self.rows, cols, data })
    }

    /// `M(rows, cols)` for explicit index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Matrix, MatrixError> {
        check_indices(rows, self.rows)?;
        check_indices(cols, self.cols)?;
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            data.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        Ok(Matrix { field: self.field, rows: rows.len(), cols: cols.len(), data })
    }

    /// Contiguous row block `[start, end)`.
    pub fn row_range(&self, start: usize, end: usize) -> Result<Matrix, MatrixError> {
        if start > end || end > self.rows {
            return Err(MatrixError::IndexOutOfRange { index: end, len: self.rows });
        }
        Ok(Matrix {
            field: self.field,
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        })
    }

    /// Contiguous column block `[start, end)`.
    pub fn col_range(&self, start: usize, end: usize) -> Result<Matrix, MatrixError> {
        if start > end || end > self.cols {
            return Err(MatrixError::IndexOutOfRange { index: end, len: self.cols });
        }
        let cols: Vec<usize> = (start..end).collect();
        let rows: Vec<usize> = (0..self.rows).collect();
        self.submatrix(&rows, &cols)
    }

    /// Overwrite the block starting at `(row, col)` with `block`.
    pub fn paste(&mut self, row: usize, col: usize, block: &Matrix) -> Result<(), MatrixError> {
        self.same_field(block)?;
        if row + block.rows > self.rows || col + block.cols > self.cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "{}x{} block at ({row},{col}) in {}x{}",
                block.rows, block.cols, self.rows, self.cols
            )));
        }
        for r in 0..block.rows {
            for c in 0..block.cols {
                self.set(row + r, col + c, block.get(r, c));
            }
        }
        Ok(())
    }

    /// Reduced row echelon form with the pivot column of each nonzero row.
    fn echelon(&self) -> Echelon {
        let f = self.field;
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut lead = 0;
        let mut support = Vec::with_capacity(m.cols);
        for c in 0..m.cols {
            if lead == m.rows {
                break;
            }
            let Some(p) = (lead..m.rows).find(|&r| !m.get(r, c).is_zero()) else {
                continue;
            };
            m.swap_rows(lead, p);
            let inv = f.inv(m.get(lead, c)).expect("pivot is nonzero");
            if inv != Fe::ONE {
                for j in c..m.cols {
                    let v = m.get(lead, j);
                    m.set(lead, j, f.mul(v, inv));
                }
            }
            support.clear();
            support.extend((c..m.cols).filter(|&j| !m.get(lead, j).is_zero()));
            for r in 0..m.rows {
                if r == lead {
                    continue;
                }
                let factor = m.get(r, c);
                if factor.is_zero() {
                    continue;
                }
                for &j in &support {
                    let v = f.sub(m.get(r, j), f.mul(factor, m.get(lead, j)));
                    m.set(r, j, v);
                }
            }
            pivots.push(c);
            lead += 1;
        }
        Echelon { reduced: m, pivots }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    pub fn rank(&self) -> usize {
        self.echelon().pivots.len()
    }

    pub fn inverse(&self) -> Result<Matrix, MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::DimensionMismatch(format!(
                "inverse of non-square {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let aug = self.hstack(&Matrix::identity(self.field, n))?;
        let e = aug.echelon();
        if e.pivots.len() < n || e.pivots[n - 1] >= n {
            return Err(MatrixError::Singular);
        }
        e.reduced.col_range(n, 2 * n)
    }

    /// Basis of the right null space, one basis vector per column.
    pub fn null_space_basis(&self) -> Matrix {
        let f = self.field;
        let e = self.echelon();
        let is_pivot = {
            let mut v = vec![false; self.cols];
            for &p in &e.pivots {
                v[p] = true;
            }
            v
        };
        let free: Vec<usize> = (0..self.cols).filter(|&c| !is_pivot[c]).collect();
        let mut basis = Matrix::zeros(f, self.cols, free.len());
        for (k, &fc) in free.iter().enumerate() {
            basis.set(fc, k, Fe::ONE);
            for (r, &pc) in e.pivots.iter().enumerate() {
                basis.set(pc, k, f.neg(e.reduced.get(r, fc)));
            }
        }
        basis
    }

    /// One solution of `self * x = b`, with every free variable set to zero.
    pub fn solve_particular(&self, b: &[Fe]) -> Result<Vec<Fe>, MatrixError> {
        if b.len() != self.rows {
            return Err(MatrixError::DimensionMismatch(format!(
                "rhs of length {} for {} equations",
                b.len(),
                self.rows
            )));
        }
        let rhs = Matrix { field: self.field, rows: b.len(), cols: 1, data: b.to_vec() };
        let e = self.hstack(&rhs)?.echelon();
        if e.pivots.last() == Some(&self.cols) {
            return Err(MatrixError::Inconsistent);
        }
        let mut x = vec![Fe::ZERO; self.cols];
        for (r, &pc) in e.pivots.iter().enumerate() {
            x[pc] = e.reduced.get(r, self.cols);
        }
        Ok(x)
    }
}

fn check_indices(idx: &[usize], len: usize) -> Result<(), MatrixError> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&index) => Err(MatrixError::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}
