//! Dense row-major matrices.
//!
//! `data[i * cols + j]` holds entry `(i, j)`. Everything here is sized for
//! desk-scale systems (state dimension up to a few dozen), so no attempt is
//! made at blocking or SIMD.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Deref, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::math;

use super::lu;

/// A dense real matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "row-major data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    /// Column vector from a slice.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    /// 1x1 matrix.
    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// Assembles `[[a, b], [c, d]]` from conforming blocks.
    pub fn from_blocks(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Result<Self> {
        if a.rows != b.rows || c.rows != d.rows {
            return Err(Error::DimensionMismatch {
                context: "block rows",
                expected: a.rows,
                found: b.rows,
            });
        }
        if a.cols != c.cols || b.cols != d.cols {
            return Err(Error::DimensionMismatch {
                context: "block columns",
                expected: a.cols,
                found: c.cols,
            });
        }
        let mut m = Matrix::zeros(a.rows + c.rows, a.cols + b.cols);
        m.set_block(0, 0, a);
        m.set_block(0, a.cols, b);
        m.set_block(a.rows, 0, c);
        m.set_block(a.rows, a.cols, d);
        Ok(m)
    }

    /// Stacks `top` over `bottom`.
    pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Self> {
        if top.cols != bottom.cols {
            return Err(Error::DimensionMismatch {
                context: "vstack",
                expected: top.cols,
                found: bottom.cols,
            });
        }
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Ok(Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    pub fn block_diag(a: &Matrix, b: &Matrix) -> Self {
        let mut m = Matrix::zeros(a.rows + b.rows, a.cols + b.cols);
        m.set_block(0, 0, a);
        m.set_block(a.rows, a.cols, b);
        m
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
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Rows as nested vectors, handy for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Matrix) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius inner product `<self, other> = tr(selfᵀ other)`.
    pub fn inner(&self, other: &Matrix) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Largest entrywise difference from the transpose.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max(math::abs(self[(i, j)] - self[(j, i)]));
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `xᵀ self y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(self.rows, x.len());
        debug_assert_eq!(self.cols, y.len());
        let mut acc = 0.0;
        for i in 0..self.rows {
            let row: f64 = self.row(i).iter().zip(y).map(|(a, b)| a * b).sum();
            acc += x[i] * row;
        }
        acc
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn kron(&self, other: &Matrix) -> Matrix {
        Matrix::from_fn(self.rows * other.rows, self.cols * other.cols, |i, j| {
            self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)]
        })
    }

    fn require_square(&self, what: &'static str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::NotSquare {
                what,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn determinant(&self) -> Result<f64> {
        self.require_square("determinant argument")?;
        let mut work = self.data.clone();
        let f = lu::factor_unchecked(&mut work, self.rows);
        Ok(f.determinant(&work))
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        self.require_square("linear system")?;
        if rhs.rows != self.rows {
            return Err(Error::DimensionMismatch {
                context: "solve rhs",
                expected: self.rows,
                found: rhs.rows,
            });
        }
        let n = self.rows;
        let mut work = self.data.clone();
        let f = lu::factor(&mut work, n).map_err(|_| Error::Singular {
            what: "linear system",
        })?;
        let mut out = rhs.clone();
        let mut col = vec![0.0; n];
        for j in 0..rhs.cols {
            for i in 0..n {
                col[i] = rhs[(i, j)];
            }
            f.solve_in_place(&work, &mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve(&Matrix::identity(self.rows))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;

    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;

    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Matrix {
    type Output = Matrix;

    fn neg(self) -> Matrix {
        self.scale(-1.0)
    }
}

/// Panics on shape mismatch; use [`Matrix::matmul`] for a checked product.
impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs).expect("matmul shape")
    }
}

/// A real symmetric matrix. Symmetry is enforced on construction by
/// averaging with the transpose, so `(i, j)` and `(j, i)` are bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSquare {
                what: "symmetric matrix",
                rows: m.rows,
                cols: m.cols,
            });
        }
        if m.rows == 0 {
            return Err(Error::InvalidArgument("empty symmetric matrix".into()));
        }
        Ok(Self::symmetrize(m))
    }

    /// Square input assumed; averages with the transpose.
    pub(crate) fn symmetrize(mut m: Matrix) -> Self {
        let n = m.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn diag(values: &[f64]) -> Self {
        SymMatrix(Matrix::diag(values))
    }

    pub fn scalar(value: f64) -> Self {
        SymMatrix(Matrix::scalar(value))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `‖x‖²_S = xᵀ S x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.0.bilinear(x, x)
    }

    /// Congruence `Tᵀ S T`, symmetrized.
    pub fn congruence(&self, t: &Matrix) -> Result<SymMatrix> {
        let inner = self.0.matmul(t)?;
        Ok(SymMatrix::symmetrize(t.transpose().matmul(&inner)?))
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix(self.0.scale(s))
    }

    pub fn block_diag(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
        SymMatrix(Matrix::block_diag(&a.0, &b.0))
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        Ok(SymMatrix::symmetrize(self.0.inverse()?))
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

impl From<SymMatrix> for Matrix {
    fn from(s: SymMatrix) -> Matrix {
        s.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrize_is_exact() {
        let s = SymMatrix::new(Matrix::from_rows(&[[1.0, 0.3], [0.1, 2.0]])).unwrap();
        assert_eq!(s[(0, 1)], s[(1, 0)]);
        assert_eq!(s[(0, 1)], 0.2);
    }

    #[test]
    fn empty_and_rectangular_rejected() {
        assert!(SymMatrix::new(Matrix::zeros(0, 0)).is_err());
        assert!(matches!(
            SymMatrix::new(Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn blocks_and_kron() {
        let a = Matrix::identity(1);
        let b = Matrix::scalar(2.0);
        let m = Matrix::from_blocks(&a, &b, &b.scale(-1.0), &a).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[1.0, 2.0], [-2.0, 1.0]]));
        let k = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).kron(&Matrix::identity(2));
        assert_eq!(k[(0, 2)], 1.0);
        assert_eq!(k[(3, 1)], -1.0);
        assert_eq!(k[(0, 1)], 0.0);
    }

    #[test]
    fn inverse_and_det() {
        let m = Matrix::from_rows(&[[4.0, 7.0], [2.0, 6.0]]);
        assert!((m.determinant().unwrap() - 10.0).abs() < 1e-12);
        let inv = m.inverse().unwrap();
        let prod = &m * &inv;
        assert!((&prod - &Matrix::identity(2)).max_abs() < 1e-14);
        let sing = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert_eq!(sing.determinant().unwrap(), 0.0);
        assert!(matches!(sing.inverse(), Err(Error::Singular { .. })));
    }
}
