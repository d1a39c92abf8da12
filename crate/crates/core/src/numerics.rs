//! Dense linear algebra used throughout the crate.
//!
//! Everything here works on the row-major [`Matrix`] type. Symmetric
//! positive-definite systems are always solved through a [`CholeskyFactor`];
//! no routine forms an explicit inverse unless the caller asks for one.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by [`cholesky`] to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "Matrix::from_rows",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single-column matrix.
    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest |a_ij - a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Replaces the matrix with (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::sub", |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matmul",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch {
                context: "Matrix::matvec",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
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

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0_f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower Cholesky factor of a (possibly jittered) symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    lower: Matrix,
    jitter_used: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Diagonal inflation that was added before the factorization succeeded.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// L·Lᵀ.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.lower.row(i)[..=j], &self.lower.row(j)[..=j]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Solves L x = b in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let l = &self.lower;
        for i in 0..b.len() {
            let s = b[i] - dot(&l.row(i)[..i], &b[..i]);
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves Lᵀ x = b in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let l = &self.lower;
        let n = b.len();
        for i in (0..n).rev() {
            b[i] /= l[(i, i)];
            let xi = b[i];
            // Column i of Lᵀ above the diagonal is row i of L left of it.
            for (bj, &lij) in b[..i].iter_mut().zip(&l.row(i)[..i]) {
                *bj -= lij * xi;
            }
        }
    }

    /// Solves (L·Lᵀ) x = b for a single right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "solve_spd",
                expected: self.dim(),
                found: b.len(),
            });
        }
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        Ok(x)
    }

    /// (L·Lᵀ)⁻¹, for callers that genuinely need every entry.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let l = &self.lower;
        // Row j of `u` holds column j of L⁻¹, nonzero from index j on, so
        // (L⁻ᵀL⁻¹)_{ij} is a dot product of two row tails.
        let mut u = Matrix::zeros(n, n);
        for j in 0..n {
            let row = u.row_mut(j);
            row[j] = 1.0 / l[(j, j)];
            for i in j + 1..n {
                row[i] = -dot(&l.row(i)[j..i], &row[j..i]) / l[(i, i)];
            }
        }
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&u.row(i)[i..], &u.row(j)[i..]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// The default jitter schedule `[0, 1e-10·m, 1e-8·m, 1e-6·m]` with m = tr(A)/n.
pub fn default_jitter_schedule(a: &Matrix) -> Vec<f64> {
    let n = a.rows().max(1) as f64;
    let mean_diag = (a.trace() / n).abs();
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    vec![0.0, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale]
}

/// Cholesky factorization of `a + jitter·I` for the first jitter in the
/// schedule that yields a positive diagonal.
pub fn cholesky(a: &Matrix, jitter_schedule: &[f64]) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "cholesky",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOL * a.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut schedule: Vec<f64> = jitter_schedule.to_vec();
    if schedule.is_empty() {
        schedule.push(0.0);
    }
    for &jitter in &schedule {
        if let Some(lower) = try_cholesky(a, jitter) {
            return Ok(CholeskyFactor {
                lower,
                jitter_used: jitter,
            });
        }
    }
    Err(Error::NotPositiveDefinite { dim: a.rows() })
}

/// [`cholesky`] with [`default_jitter_schedule`].
pub fn cholesky_default(a: &Matrix) -> Result<CholeskyFactor> {
    cholesky(a, &default_jitter_schedule(a))
}

const CHOL_BLOCK: usize = 64;

/// Right-looking blocked factorization in place on a copy of the lower
/// triangle. Every inner product runs over contiguous row segments of one
/// column block, which keeps the working set in cache.
///
/// Off-diagonal entries below √(f64::MIN_POSITIVE) times the diagonal scale
/// are flushed to zero. Rapidly decaying kernels otherwise fill the factor
/// with subnormal numbers, which are two orders of magnitude slower to
/// multiply, for a perturbation far below rounding error.
fn try_cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).sqrt();
    let flush = f64::MIN_POSITIVE.sqrt() * scale;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        l.data[i * n..i * n + i + 1].copy_from_slice(&a.data[i * n..i * n + i + 1]);
        l.data[i * n + i] += jitter;
    }
    let d = &mut l.data;
    let mut kb = 0;
    while kb < n {
        let ke = (kb + CHOL_BLOCK).min(n);
        for i in kb..n {
            for j in kb..ke.min(i + 1) {
                let s = d[i * n + j] - dot(&d[i * n + kb..i * n + j], &d[j * n + kb..j * n + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    d[i * n + i] = s.sqrt();
                } else {
                    let v = s / d[j * n + j];
                    d[i * n + j] = if v.abs() < flush { 0.0 } else { v };
                }
            }
        }
        let mut ib = ke;
        while ib < n {
            let ie = (ib + CHOL_BLOCK).min(n);
            let mut jb = ke;
            while jb < ie {
                let je = (jb + CHOL_BLOCK).min(n);
                for i in ib..ie {
                    for j in jb..je.min(i + 1) {
                        let s = dot(&d[i * n + kb..i * n + ke], &d[j * n + kb..j * n + ke]);
                        d[i * n + j] -= s;
                    }
                }
                jb = je;
            }
            ib = ie;
        }
        kb = ke;
    }
    Some(l)
}

/// Solves (L·Lᵀ) X = B column by column.
pub fn solve_spd(factor: &CholeskyFactor, b: &Matrix) -> Result<Matrix> {
    if b.rows() != factor.dim() {
        return Err(Error::DimensionMismatch {
            context: "solve_spd",
            expected: factor.dim(),
            found: b.rows(),
        });
    }
    let mut out = Matrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let x = factor.solve_vec(&b.col(j))?;
        for (i, v) in x.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// log|L·Lᵀ| = 2·Σ log L_ii.
pub fn logdet(factor: &CholeskyFactor) -> f64 {
    2.0 * factor.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves A X = B for a general square A by LU with partial pivoting.
pub fn solve_general(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "solve_general",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    if b.rows() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "solve_general",
            expected: a.rows(),
            found: b.rows(),
        });
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&p, &q| lu[(p, k)].abs().total_cmp(&lu[(q, k)].abs()))
            .unwrap_or(k);
        if lu[(pivot, k)].abs() <= f64::EPSILON * scale * n as f64 || scale == 0.0 {
            return Err(Error::Singular);
        }
        if pivot != k {
            for j in 0..n {
                lu.data.swap(k * n + j, pivot * n + j);
            }
            for j in 0..x.cols {
                x.data.swap(k * x.cols + j, pivot * x.cols + j);
            }
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / lu[(k, k)];
            if f == 0.0 {
                continue;
            }
            lu[(i, k)] = f;
            for j in k + 1..n {
                lu[(i, j)] -= f * lu[(k, j)];
            }
            for j in 0..x.cols {
                x[(i, j)] -= f * x[(k, j)];
            }
        }
    }
    for j in 0..x.cols {
        for i in (0..n).rev() {
            let mut s = x[(i, j)];
            for k in i + 1..n {
                s -= lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

const PADE_ORDER: usize = 8;
const PADE_NORM_TARGET: f64 = 0.5;

/// Matrix exponential by scaling and squaring around a diagonal Padé core.
///
/// The input is scaled by 2^-s until its 1-norm is at most 0.5, where the
/// [8/8] approximant is accurate to well below double rounding.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "expm",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    let norm = a.norm_one();
    if norm == 0.0 {
        return Ok(Matrix::identity(n));
    }
    let squarings = if norm > PADE_NORM_TARGET {
        (norm / PADE_NORM_TARGET).log2().ceil() as i32
    } else {
        0
    };
    let x = a.scaled(2f64.powi(-squarings));

    // c_0 = 1, c_k = c_{k-1}·(q-k+1) / (k·(2q-k+1))
    let q = PADE_ORDER;
    let mut numer = Matrix::identity(n);
    let mut denom = Matrix::identity(n);
    let mut power = Matrix::identity(n);
    let mut c = 1.0;
    for k in 1..=q {
        c *= (q - k + 1) as f64 / (k * (2 * q - k + 1)) as f64;
        power = power.matmul(&x)?;
        let term = power.scaled(c);
        numer = numer.add(&term)?;
        denom = if k % 2 == 0 {
            denom.add(&term)?
        } else {
            denom.sub(&term)?
        };
    }
    let mut result = solve_general(&denom, &numer)?;
    for _ in 0..squarings {
        result = result.matmul(&result)?;
    }
    Ok(result)
}
