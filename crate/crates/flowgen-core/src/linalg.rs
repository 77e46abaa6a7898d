//! Dense vectors and matrices with the handful of factorizations the rest of
//! the crate needs: LU log-determinants, linear solves, symmetric
//! eigendecomposition, SPD square roots and Moore–Penrose pseudoinverses.
//!
//! All arithmetic is in `f64`. Dimensions are expected to stay at desk scale
//! (a few hundred at most); everything here is `O(n^3)` dense code with no
//! blocking or parallelism.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use crate::math;

/// Errors raised by the dense linear algebra routines.
#[derive(Clone, Debug, PartialEq)]
pub enum LinAlgError {
    /// Operation requires a square matrix.
    NotSquare { rows: usize, cols: usize },
    /// Operand dimensions do not line up.
    DimensionMismatch { expected: usize, got: usize },
    /// Matrix is singular to working precision. `condition` is a cheap
    /// estimate (pivot ratio) of the condition number at the point of failure.
    Singular { condition: f64 },
    /// Symmetric routine called on an asymmetric matrix.
    NotSymmetric { max_asymmetry: f64 },
    /// SPD routine found an eigenvalue below the tolerated floor.
    NotPositiveSemiDefinite { eigenvalue: f64 },
    /// A non-finite entry was passed to a validating constructor.
    NonFinite,
}

impl fmt::Display for LinAlgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::NotSquare { rows, cols } => write!(f, "matrix is {rows}x{cols}, expected square"),
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::Singular { condition } => {
                write!(f, "matrix is singular (condition estimate {condition:.3e})")
            }
            Self::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix is not symmetric (max |a_ij - a_ji| = {max_asymmetry:.3e})")
            }
            Self::NotPositiveSemiDefinite { eigenvalue } => {
                write!(f, "matrix is not PSD (eigenvalue {eigenvalue:.3e})")
            }
            Self::NonFinite => write!(f, "non-finite entry"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LinAlgError {}

/// Pivot-magnitude floor below which a matrix is reported singular.
///
/// Corresponds to the |det| > 1e-300 requirement on the log scale; Jacobians
/// of the generators used here stay far above it.
pub const SINGULARITY_TOL: f64 = 1e-300;

/// Condition-number estimate above which solves are considered unreliable.
/// Documented threshold only; solves still return their result.
pub const CONDITION_WARN: f64 = 1e12;

/// Convergence threshold factor for the Jacobi eigensolver: iteration stops
/// once the off-diagonal Frobenius norm falls below `1e-12 * ||m||_F`.
pub const JACOBI_TOL: f64 = 1e-12;

/// A dense vector of `f64` entries with a fixed length.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Builds a vector after checking every entry is finite.
    pub fn new(data: Vec<f64>) -> Result<Self, LinAlgError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinAlgError::NonFinite);
        }
        Ok(Self { data })
    }

    /// Builds a vector without the finiteness check. Callers on hot paths are
    /// expected to guard against non-finite values at a coarser granularity.
    pub fn from_raw(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: vec![0.0; n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        Self {
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_raw(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_raw(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.data.iter().map(|a| a * s).collect())
    }

    /// `self += a * x`, entrywise.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// A dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    /// Builds a matrix after checking shape consistency and entry finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinAlgError> {
        if data.len() != rows * cols {
            return Err(LinAlgError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinAlgError::NonFinite);
        }
        Ok(Self { data, rows, cols })
    }

    pub fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { data, rows, cols }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
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
        Self { data, rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matvec(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.cols, x.len());
        Vector::from_raw((0..self.rows).map(|i| dot(self.row(i), x.as_slice())).collect())
    }

    /// `self^T x` without materializing the transpose.
    pub fn matvec_transposed(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        Vector::from_raw(out)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(orow) {
                    *o += aik * b;
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|a| a * s).collect())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max(math::abs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }

    /// `(self + self^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    fn require_square(&self) -> Result<(), LinAlgError> {
        if self.is_square() {
            Ok(())
        } else {
            Err(LinAlgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    /// LU factorization with partial pivoting. Returns the packed factors,
    /// the row permutation and the permutation sign.
    fn lu_factor(&self) -> Result<(Matrix, Vec<usize>, i32), LinAlgError> {
        self.require_square()?;
        let n = self.rows;
        let mut lu = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1i32;
        for k in 0..n {
            let mut p = k;
            let mut best = math::abs(lu.get(k, k));
            for i in (k + 1)..n {
                let v = math::abs(lu.get(i, k));
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    let a = lu.get(k, j);
                    let b = lu.get(p, j);
                    lu.set(k, j, b);
                    lu.set(p, j, a);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu.get(k, k);
            if pivot == 0.0 {
                // Exactly singular: leave the zero column untouched.
                continue;
            }
            for i in (k + 1)..n {
                let factor = lu.get(i, k) / pivot;
                lu.set(i, k, factor);
                if factor != 0.0 {
                    for j in (k + 1)..n {
                        let v = lu.get(i, j) - factor * lu.get(k, j);
                        lu.set(i, j, v);
                    }
                }
            }
        }
        Ok((lu, perm, sign))
    }

    /// Log of the absolute determinant plus the determinant sign (0 when
    /// singular). `exp(logabsdet)` recovers `|det|` up to round-off.
    pub fn log_abs_det(&self) -> Result<(f64, i32), LinAlgError> {
        let (lu, _, mut sign) = self.lu_factor()?;
        let mut log_abs = 0.0;
        for i in 0..lu.rows {
            let d = lu.get(i, i);
            if d == 0.0 {
                return Ok((f64::NEG_INFINITY, 0));
            }
            if d < 0.0 {
                sign = -sign;
            }
            log_abs += math::ln(math::abs(d));
        }
        Ok((log_abs, sign))
    }

    /// Solves `self * x = rhs` by LU with partial pivoting.
    ///
    /// Reports `Singular` when a pivot falls below [`SINGULARITY_TOL`]; the
    /// attached condition estimate is the max/min pivot-magnitude ratio (see
    /// also [`CONDITION_WARN`]).
    pub fn solve(&self, rhs: &Vector) -> Result<Vector, LinAlgError> {
        self.require_square()?;
        if rhs.len() != self.rows {
            return Err(LinAlgError::DimensionMismatch {
                expected: self.rows,
                got: rhs.len(),
            });
        }
        let n = self.rows;
        let (lu, perm, _) = self.lu_factor()?;
        let mut max_piv = 0.0_f64;
        let mut min_piv = f64::INFINITY;
        for i in 0..n {
            let p = math::abs(lu.get(i, i));
            max_piv = max_piv.max(p);
            min_piv = min_piv.min(p);
        }
        if min_piv < SINGULARITY_TOL {
            let condition = if min_piv == 0.0 { f64::INFINITY } else { max_piv / min_piv };
            return Err(LinAlgError::Singular { condition });
        }
        // Forward substitution on the permuted right-hand side.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = rhs[perm[i]];
            for j in 0..i {
                acc -= lu.get(i, j) * y[j];
            }
            y[i] = acc;
        }
        // Back substitution.
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= lu.get(i, j) * x[j];
            }
            x[i] = acc / lu.get(i, i);
        }
        Ok(Vector::from_raw(x))
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations.
    ///
    /// Eigenvalues come back in descending order with matching eigenvector
    /// columns; `self = V diag(values) V^T` up to the iteration tolerance.
    pub fn sym_eigen(&self) -> Result<SymEigen, LinAlgError> {
        self.require_square()?;
        let asym = self.max_asymmetry();
        let scale = self.frobenius_norm().max(1.0);
        if asym > 1e-12 * scale {
            return Err(LinAlgError::NotSymmetric { max_asymmetry: asym });
        }
        let n = self.rows;
        let mut a = self.symmetrized();
        let mut v = Matrix::identity(n);
        let norm = a.frobenius_norm();
        if norm == 0.0 {
            return Ok(SymEigen {
                values: Vector::zeros(n),
                vectors: v,
            });
        }
        let tol = JACOBI_TOL * norm;
        let max_sweeps = 64;
        for _ in 0..max_sweeps {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += 2.0 * a.get(i, j) * a.get(i, j);
                }
            }
            if math::sqrt(off) < tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if math::abs(apq) == 0.0 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    // Stable tangent of the rotation angle.
                    let t = if theta >= 0.0 {
                        1.0 / (theta + math::sqrt(1.0 + theta * theta))
                    } else {
                        1.0 / (theta - math::sqrt(1.0 + theta * theta))
                    };
                    let c = 1.0 / math::sqrt(1.0 + t * t);
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap_or(core::cmp::Ordering::Equal));
        let values = Vector::from_raw(order.iter().map(|&i| diag[i]).collect());
        let vectors = Matrix::from_fn(n, n, |i, j| v.get(i, order[j]));
        Ok(SymEigen { values, vectors })
    }

    /// Symmetric PSD square root. Eigenvalues in `[-1e-10, 0)` are clamped to
    /// zero; anything below `-1e-6` is an error.
    pub fn sqrt_spd(&self) -> Result<Matrix, LinAlgError> {
        let eig = self.sym_eigen()?;
        let n = self.rows;
        let mut roots = vec![0.0; n];
        for i in 0..n {
            let lam = eig.values[i];
            if lam < -1e-6 {
                return Err(LinAlgError::NotPositiveSemiDefinite { eigenvalue: lam });
            }
            roots[i] = math::sqrt(lam.max(0.0));
        }
        // V diag(sqrt) V^T, symmetrized against round-off.
        let v = &eig.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += v.get(i, k) * roots[k] * v.get(j, k);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        Ok(out)
    }

    /// Moore–Penrose pseudoinverse via the eigendecomposition of the Gram
    /// matrix (adequate at desk scale; not a full SVD).
    pub fn pseudo_inverse(&self) -> Matrix {
        if self.rows >= self.cols {
            // A+ = (A^T A)^+ A^T
            let at = self.transpose();
            let gram = at.matmul(self).symmetrized();
            let gram_pinv = sym_pinv(&gram, self.rows.max(self.cols));
            gram_pinv.matmul(&at)
        } else {
            // A+ = A^T (A A^T)^+
            let at = self.transpose();
            let gram = self.matmul(&at).symmetrized();
            let gram_pinv = sym_pinv(&gram, self.rows.max(self.cols));
            at.matmul(&gram_pinv)
        }
    }

    /// Explicit inverse by one LU factorization plus `n` substitutions.
    pub fn inverse(&self) -> Result<Matrix, LinAlgError> {
        self.require_square()?;
        let n = self.rows;
        let (lu, perm, _) = self.lu_factor()?;
        let mut max_piv = 0.0_f64;
        let mut min_piv = f64::INFINITY;
        for i in 0..n {
            let p = math::abs(lu.get(i, i));
            max_piv = max_piv.max(p);
            min_piv = min_piv.min(p);
        }
        if min_piv < SINGULARITY_TOL {
            let condition = if min_piv == 0.0 { f64::INFINITY } else { max_piv / min_piv };
            return Err(LinAlgError::Singular { condition });
        }
        let mut out = Matrix::zeros(n, n);
        let mut y = vec![0.0; n];
        for col in 0..n {
            for i in 0..n {
                let mut acc = if perm[i] == col { 1.0 } else { 0.0 };
                for j in 0..i {
                    acc -= lu.get(i, j) * y[j];
                }
                y[i] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = y[i];
                for j in (i + 1)..n {
                    acc -= lu.get(i, j) * out.get(j, col);
                }
                out.set(i, col, acc / lu.get(i, i));
            }
        }
        Ok(out)
    }

    /// Cholesky factor `L` with `self = L L^T`. Fails when the matrix is not
    /// positive definite.
    pub fn cholesky(&self) -> Result<Matrix, LinAlgError> {
        self.require_square()?;
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = self.get(i, j);
                for k in 0..j {
                    acc -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if acc <= 0.0 {
                        return Err(LinAlgError::NotPositiveSemiDefinite { eigenvalue: acc });
                    }
                    l.set(i, j, math::sqrt(acc));
                } else {
                    l.set(i, j, acc / l.get(j, j));
                }
            }
        }
        Ok(l)
    }
}

/// Pseudoinverse of a symmetric PSD matrix from its eigendecomposition,
/// with a rank cutoff relative to the largest eigenvalue.
fn sym_pinv(m: &Matrix, max_dim: usize) -> Matrix {
    let eig = m.sym_eigen().expect("symmetrized Gram matrix");
    let n = m.rows();
    let lam_max = eig.values.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    let tol = lam_max * (max_dim as f64) * f64::EPSILON;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                let lam = eig.values[k];
                if lam > tol {
                    acc += eig.vectors.get(i, k) * eig.vectors.get(j, k) / lam;
                }
            }
            out.set(i, j, acc);
            out.set(j, i, acc);
        }
    }
    out
}

/// Result of [`Matrix::sym_eigen`]: descending eigenvalues and the matching
/// eigenvector columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vector,
    pub vectors: Matrix,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededPrng;

    /// Brute-force determinant by cofactor expansion; the independent oracle
    /// for the LU log-determinant.
    fn cofactor_det(m: &Matrix) -> f64 {
        let n = m.rows();
        if n == 1 {
            return m.get(0, 0);
        }
        let mut acc = 0.0;
        for j in 0..n {
            let minor = Matrix::from_fn(n - 1, n - 1, |r, c| {
                m.get(r + 1, if c < j { c } else { c + 1 })
            });
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * m.get(0, j) * cofactor_det(&minor);
        }
        acc
    }

    /// Independent Gauss-Jordan elimination, used as the solve oracle.
    fn gauss_jordan_solve(m: &Matrix, rhs: &Vector) -> Vector {
        let n = m.rows();
        let mut aug = Matrix::from_fn(n, n + 1, |i, j| if j < n { m.get(i, j) } else { rhs[i] });
        for col in 0..n {
            let mut p = col;
            for r in (col + 1)..n {
                if aug.get(r, col).abs() > aug.get(p, col).abs() {
                    p = r;
                }
            }
            if p != col {
                for j in 0..=n {
                    let a = aug.get(col, j);
                    let b = aug.get(p, j);
                    aug.set(col, j, b);
                    aug.set(p, j, a);
                }
            }
            let piv = aug.get(col, col);
            for j in 0..=n {
                aug.set(col, j, aug.get(col, j) / piv);
            }
            for r in 0..n {
                if r != col {
                    let f = aug.get(r, col);
                    for j in 0..=n {
                        let v = aug.get(r, j) - f * aug.get(col, j);
                        aug.set(r, j, v);
                    }
                }
            }
        }
        Vector::from_fn(n, |i| aug.get(i, n))
    }

    fn random_matrix(rng: &mut SeededPrng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.next_f64() * 2.0 - 1.0)
    }

    fn random_spd(rng: &mut SeededPrng, n: usize) -> Matrix {
        let a = random_matrix(rng, n, n);
        let mut m = a.matmul(&a.transpose());
        for i in 0..n {
            m.set(i, i, m.get(i, i) + 0.5);
        }
        m
    }

    #[test]
    fn log_abs_det_identity_and_diag() {
        let (ld, sign) = Matrix::identity(3).log_abs_det().unwrap();
        assert_eq!(sign, 1);
        assert!(ld.abs() < 1e-14);

        let (ld, sign) = Matrix::diagonal(&[2.0, 0.5]).log_abs_det().unwrap();
        assert_eq!(sign, 1);
        assert!(ld.abs() < 1e-14);
    }

    #[test]
    fn log_abs_det_matches_cofactor_oracle() {
        let mut rng = SeededPrng::new(11);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 4, 4);
            let det = cofactor_det(&m);
            let (ld, sign) = m.log_abs_det().unwrap();
            let recon = (sign as f64) * crate::math::exp(ld);
            assert!(
                (recon - det).abs() <= 1e-10 * det.abs().max(1.0),
                "recon {recon} vs oracle {det}"
            );
        }
    }

    #[test]
    fn log_abs_det_singular() {
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let (ld, sign) = m.log_abs_det().unwrap();
        assert_eq!(sign, 0);
        assert_eq!(ld, f64::NEG_INFINITY);
    }

    #[test]
    fn log_abs_det_rejects_non_square() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(m.log_abs_det(), Err(LinAlgError::NotSquare { .. })));
    }

    #[test]
    fn solve_identity_and_diag() {
        let v = Vector::new(vec![3.0, -1.0]).unwrap();
        let x = Matrix::identity(2).solve(&v).unwrap();
        assert_eq!(x, v);

        let x = Matrix::diagonal(&[2.0, 4.0])
            .solve(&Vector::new(vec![2.0, 4.0]).unwrap())
            .unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_matches_gauss_jordan_oracle() {
        let mut rng = SeededPrng::new(23);
        for _ in 0..10 {
            let m = random_spd(&mut rng, 5);
            let rhs = Vector::from_fn(5, |_| rng.next_f64() * 2.0 - 1.0);
            let x = m.solve(&rhs).unwrap();
            let oracle = gauss_jordan_solve(&m, &rhs);
            for i in 0..5 {
                assert!((x[i] - oracle[i]).abs() <= 1e-9 * oracle[i].abs().max(1.0));
            }
            // Residual check against the stated contract.
            let res = m.matvec(&x).sub(&rhs).norm() / rhs.norm().max(1.0);
            assert!(res < 1e-9);
        }
    }

    #[test]
    fn solve_recovers_preimage() {
        let mut rng = SeededPrng::new(5);
        for _ in 0..10 {
            let m = random_spd(&mut rng, 6);
            let v = Vector::from_fn(6, |_| rng.next_f64() * 4.0 - 2.0);
            let x = m.solve(&m.matvec(&v)).unwrap();
            let err = x.sub(&v).norm() / v.norm().max(1.0);
            assert!(err < 1e-8);
        }
    }

    #[test]
    fn solve_singular_reports_condition() {
        let m = Matrix::new(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        match m.solve(&Vector::zeros(2)) {
            Err(LinAlgError::Singular { condition }) => assert!(condition > 1e12),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn eigen_diagonal_and_analytic_2x2() {
        let eig = Matrix::diagonal(&[3.0, 1.0]).sym_eigen().unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
        // Columns must match I up to sign.
        assert!((eig.vectors.get(0, 0).abs() - 1.0).abs() < 1e-12);
        assert!((eig.vectors.get(1, 1).abs() - 1.0).abs() < 1e-12);

        let m = Matrix::new(2, 2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let eig = m.sym_eigen().unwrap();
        assert!((eig.values[0] - 3.0).abs() < 1e-12);
        assert!((eig.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let mut rng = SeededPrng::new(7);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 6, 6);
            let m = a.add(&a.transpose()).scale(0.5);
            let eig = m.sym_eigen().unwrap();
            let lam = Matrix::diagonal(eig.values.as_slice());
            let recon = eig.vectors.matmul(&lam).matmul(&eig.vectors.transpose());
            assert!(recon.sub(&m).frobenius_norm() <= 1e-8 * m.frobenius_norm().max(1.0));
            // Orthonormality of V.
            let vtv = eig.vectors.transpose().matmul(&eig.vectors);
            assert!(vtv.sub(&Matrix::identity(6)).frobenius_norm() < 1e-10);
            // Eigenvalue sum equals trace.
            let sum: f64 = eig.values.iter().sum();
            assert!((sum - m.trace()).abs() <= 1e-10 * m.trace().abs().max(1.0));
        }
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(m.sym_eigen(), Err(LinAlgError::NotSymmetric { .. })));
    }

    #[test]
    fn sqrt_spd_trivial_and_reconstruction() {
        let s = Matrix::identity(3).sqrt_spd().unwrap();
        assert!(s.sub(&Matrix::identity(3)).frobenius_norm() < 1e-12);

        let s = Matrix::diagonal(&[4.0, 9.0]).sqrt_spd().unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-12 && (s.get(1, 1) - 3.0).abs() < 1e-12);

        let mut rng = SeededPrng::new(13);
        for _ in 0..5 {
            let m = random_spd(&mut rng, 5);
            let s = m.sqrt_spd().unwrap();
            assert!(s.matmul(&s).sub(&m).frobenius_norm() <= 1e-8 * m.frobenius_norm());
            assert!(s.max_asymmetry() < 1e-12);
        }
    }

    #[test]
    fn sqrt_spd_idempotent_on_projectors() {
        // Projection onto span{(1,1)/sqrt(2)}.
        let p = Matrix::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let s = p.sqrt_spd().unwrap();
        assert!(s.sub(&p).frobenius_norm() < 1e-10);
    }

    #[test]
    fn sqrt_spd_rejects_negative() {
        let m = Matrix::diagonal(&[1.0, -0.5]);
        assert!(matches!(
            m.sqrt_spd(),
            Err(LinAlgError::NotPositiveSemiDefinite { .. })
        ));
    }

    #[test]
    fn pinv_identity_and_rank_one() {
        let p = Matrix::identity(4).pseudo_inverse();
        assert!(p.sub(&Matrix::identity(4)).frobenius_norm() < 1e-12);

        // Column vector (2, 0)^T has pseudoinverse row (0.5, 0).
        let col = Matrix::new(2, 1, vec![2.0, 0.0]).unwrap();
        let p = col.pseudo_inverse();
        assert_eq!((p.rows(), p.cols()), (1, 2));
        assert!((p.get(0, 0) - 0.5).abs() < 1e-12);
        assert!(p.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn pinv_satisfies_penrose_identities() {
        let mut rng = SeededPrng::new(31);
        for &(r, c) in &[(5usize, 3usize), (3, 5), (4, 4)] {
            let a = random_matrix(&mut rng, r, c);
            let p = a.pseudo_inverse();
            let apa = a.matmul(&p).matmul(&a);
            let pap = p.matmul(&a).matmul(&p);
            let ap = a.matmul(&p);
            let pa = p.matmul(&a);
            assert!(apa.sub(&a).frobenius_norm() <= 1e-7 * a.frobenius_norm().max(1.0));
            assert!(pap.sub(&p).frobenius_norm() <= 1e-7 * p.frobenius_norm().max(1.0));
            assert!(ap.sub(&ap.transpose()).frobenius_norm() <= 1e-7);
            assert!(pa.sub(&pa.transpose()).frobenius_norm() <= 1e-7);
        }
    }

    #[test]
    fn inverse_matches_solve() {
        let mut rng = SeededPrng::new(57);
        let m = random_spd(&mut rng, 5);
        let inv = m.inverse().unwrap();
        let prod = m.matmul(&inv);
        assert!(prod.sub(&Matrix::identity(5)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn cholesky_round_trip() {
        let mut rng = SeededPrng::new(41);
        let m = random_spd(&mut rng, 5);
        let l = m.cholesky().unwrap();
        assert!(l.matmul(&l.transpose()).sub(&m).frobenius_norm() <= 1e-10 * m.frobenius_norm());
    }

    #[test]
    fn vector_new_rejects_non_finite() {
        assert!(matches!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(LinAlgError::NonFinite)
        ));
    }
}
