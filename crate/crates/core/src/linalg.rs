//! Dense row-major matrices and the truncated cosine-similarity kernel.
//!
//! The workloads here are small (tens of queries, dimensions below a few
//! hundred), so the implementation favors clarity and exact determinism
//! over cache blocking: every operation is a straightforward loop with a
//! fixed summation order, which keeps results bit-identical across runs.

use crate::error::{Error, Result};

/// Norms below this threshold are treated as zero when normalizing rows
/// or computing cosine similarities.
pub const NORM_EPSILON: f64 = 1e-12;

/// Dense row-major matrix of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry at ({}, {})",
                bad / cols,
                bad % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a zero matrix.  Dimensions must be positive.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("rows have inconsistent lengths".into()));
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry at `(row, col)`.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    /// Sets the entry at `(row, col)`.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] = value;
    }

    /// Adds `value` to the entry at `(row, col)`.
    #[inline]
    pub fn add_at(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col] += value;
    }

    /// Row `r` as a slice.
    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row `r` as a mutable slice.
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row-major view of the underlying data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable row-major view of the underlying data.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self * other`, requiring `self.cols == other.rows`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let lhs = self.row(i);
            let dst = out.row_mut(i);
            for (k, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let rhs = other.row(k);
                for (d, &r) in rhs.iter().enumerate() {
                    dst[d] += l * r;
                }
            }
        }
        out
    }

    /// `self * other^T`, requiring `self.cols == other.cols`.
    pub fn matmul_transpose(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transpose shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let lhs = self.row(i);
            for j in 0..other.rows {
                out.set(i, j, dot(lhs, other.row(j)));
            }
        }
        out
    }

    /// `self^T * other`, requiring `self.rows == other.rows`.
    pub fn transpose_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "transpose_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let lhs = self.row(k);
            let rhs = other.row(k);
            for (i, &l) in lhs.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, &r) in rhs.iter().enumerate() {
                    dst[d] += l * r;
                }
            }
        }
        out
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// `self += scale * other`, requiring identical shapes.
    pub fn add_scaled(&mut self, scale: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    /// Multiplies every entry by `scale`.
    pub fn scale(&mut self, scale: f64) {
        for v in &mut self.data {
            *v *= scale;
        }
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A query matrix: one embedding per row.
pub type QueryMatrix = Matrix;

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Euclidean norm of a slice.
#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Row-normalized copy of a matrix, flagging rows whose norm fell below
/// [`NORM_EPSILON`] (those rows are left as zeros).
#[derive(Debug, Clone)]
pub struct RowNormalized {
    /// The normalized matrix; flagged rows are all-zero.
    pub matrix: Matrix,
    /// `true` for rows whose norm was below [`NORM_EPSILON`].
    pub zero_rows: Vec<bool>,
}

/// Normalizes each row to unit Euclidean norm.
pub fn row_normalize(m: &Matrix) -> RowNormalized {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let mut zero_rows = vec![false; m.rows()];
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if n < NORM_EPSILON {
            zero_rows[i] = true;
            continue;
        }
        let src = m.row(i);
        let dst = out.row_mut(i);
        for (d, &v) in src.iter().enumerate() {
            dst[d] = v / n;
        }
    }
    RowNormalized { matrix: out, zero_rows }
}

/// Pairwise truncated cosine similarities for the rows of a query matrix.
///
/// The similarity of rows `a` and `b` is `max(0, <q_a, q_b> / (|q_a| |q_b|))`,
/// so values always lie in `[0, 1]` and the matrix is symmetric.  Pairs
/// involving a row whose norm is below [`NORM_EPSILON`] are defined as the
/// constant 0 (including that row's diagonal entry); all other diagonal
/// entries are exactly 1.
#[derive(Debug, Clone)]
pub struct SimilarityTensor {
    values: Matrix,
    zero_rows: Vec<bool>,
}

impl SimilarityTensor {
    /// Number of rows in the underlying query matrix.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    /// True when the tensor covers zero queries (never constructed here,
    /// but required for a complete `len`/`is_empty` pair).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Truncated similarity of rows `a` and `b`.
    #[inline]
    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values.get(a, b)
    }

    /// Whether row `i` had a near-zero norm.
    pub fn is_zero_row(&self, i: usize) -> bool {
        self.zero_rows[i]
    }
}

/// Computes the [`SimilarityTensor`] of a query matrix.
pub fn cosine_similarity(q: &QueryMatrix) -> SimilarityTensor {
    let n = q.rows();
    let normalized = row_normalize(q);
    let mut values = Matrix::zeros(n, n);
    for a in 0..n {
        if normalized.zero_rows[a] {
            continue;
        }
        values.set(a, a, 1.0);
        for b in (a + 1)..n {
            if normalized.zero_rows[b] {
                continue;
            }
            let cos = dot(normalized.matrix.row(a), normalized.matrix.row(b));
            let s = cos.max(0.0);
            values.set(a, b, s);
            values.set(b, a, s);
        }
    }
    SimilarityTensor { values, zero_rows: normalized.zero_rows }
}

/// Accumulates `coeff * d cos(q_a, q_b) / d q` into `grad`.
///
/// `cos` here is the raw (untruncated) cosine; callers are responsible for
/// zeroing `coeff` in truncated or clamped regions.  Pairs involving a
/// near-zero row contribute nothing, matching the constant-0 definition of
/// their similarity.
pub fn accumulate_cosine_gradient(
    q: &QueryMatrix,
    a: usize,
    b: usize,
    coeff: f64,
    grad: &mut Matrix,
) {
    if coeff == 0.0 {
        return;
    }
    let ra = q.row(a);
    let rb = q.row(b);
    let na = norm(ra);
    let nb = norm(rb);
    if na < NORM_EPSILON || nb < NORM_EPSILON {
        return;
    }
    let cos = dot(ra, rb) / (na * nb);
    let inv = 1.0 / (na * nb);
    let ca = cos / (na * na);
    let cb = cos / (nb * nb);
    // d cos / d q_a = q_b / (|a||b|) - cos * q_a / |a|^2, symmetrically for b.
    {
        let dst = grad.row_mut(a);
        for d in 0..q.cols() {
            dst[d] += coeff * (rb[d] * inv - ca * ra[d]);
        }
    }
    {
        let dst = grad.row_mut(b);
        for d in 0..q.cols() {
            dst[d] += coeff * (ra[d] * inv - cb * rb[d]);
        }
    }
}
