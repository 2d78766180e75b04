//! Small dense linear algebra.
//!
//! Everything here targets matrices of order at most about eight: the plants,
//! Lyapunov matrices and LMI blocks handled by this crate. Storage is
//! row-major `f64`. Symmetric eigenvalues use cyclic Jacobi rotations, Stein
//! equations are solved by vectorisation, and single-input pole placement
//! uses Ackermann's formula.

use std::fmt;
use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Jacobi stops once the off-diagonal Frobenius norm falls below this
/// fraction of the input's Frobenius norm.
pub const JACOBI_TOL: f64 = 1e-12;
/// Sweeps allowed before Jacobi reports non-convergence.
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative residual accepted from [`solve_stein`].
pub const STEIN_RESIDUAL_TOL: f64 = 1e-8;
/// Margin used by the matrix-power growth test for `n >= 3`.
pub const GROWTH_TEST_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(LinalgError::Validation(msg.into()))
}

fn numeric<T>(msg: impl Into<String>) -> Result<T> {
    Err(LinalgError::Numeric(msg.into()))
}

/// Dense row-major matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return validation("matrix dimensions must be positive");
        }
        if data.len() != rows * cols {
            return validation(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return validation(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return validation("ragged rows");
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::new(n, n, data)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(1, 1, vec![value])
    }

    /// Column matrix built from a vector.
    pub fn column(v: &Vector) -> Self {
        Self::raw(v.len(), 1, v.0.clone())
    }

    // Internal constructor for results of arithmetic on already validated data.
    fn raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return validation(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &Vector) -> Result<Vector> {
        if self.cols != v.len() {
            return validation(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            ));
        }
        Ok(Vector(
            (0..self.rows)
                .map(|i| self.row(i).iter().zip(&v.0).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    fn zip_with(&self, rhs: &Mat, op: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return validation(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            ));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| op(*a, *b)).collect();
        Ok(Mat::raw(self.rows, self.cols, data))
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Mat {
        Mat::raw(self.rows, self.cols, self.data.iter().map(|v| v * k).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// True when `|m_ij - m_ji| <= rel_tol * max(||m||_F, 1e-300)` for all pairs.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let bound = rel_tol * self.frobenius_norm().max(1e-300);
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= bound))
    }

    /// `(m + m^T) / 2`; requires a square matrix.
    pub fn symmetrize(&self) -> Mat {
        let t = self.transpose();
        Mat::raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&t.data).map(|(a, b)| 0.5 * (a + b)).collect(),
        )
    }

    /// `x^T M x`.
    pub fn quad_form(&self, x: &Vector) -> Result<f64> {
        let mx = self.mul_vec(x)?;
        Ok(x.dot(&mx))
    }

    /// `T^T M T`.
    pub fn congruence(&self, t: &Mat) -> Result<Mat> {
        t.transpose().matmul(self)?.matmul(t)
    }

    /// Assembles `[[a, b], [c, d]]`.
    pub fn block2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<Mat> {
        if a.rows != b.rows || c.rows != d.rows || a.cols != c.cols || b.cols != d.cols {
            return validation("inconsistent block dimensions");
        }
        let rows = a.rows + c.rows;
        let cols = a.cols + b.cols;
        let mut out = Mat::zeros(rows, cols);
        for (blk, r0, c0) in [(a, 0, 0), (b, 0, a.cols), (c, a.rows, 0), (d, a.rows, a.cols)] {
            for i in 0..blk.rows {
                for j in 0..blk.cols {
                    out.set(r0 + i, c0 + j, blk[(i, j)]);
                }
            }
        }
        Ok(out)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Mat> {
        if !self.is_square() {
            return validation("cannot invert a non-square matrix");
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut inv = Mat::identity(n).data;
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return numeric("matrix is singular (all zeros)");
        }
        for col in 0..n {
            let (piv, piv_val) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_val <= 1e-14 * scale {
                return numeric(format!("matrix is singular at column {col}"));
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    inv.swap(col * n + j, piv * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Ok(Mat::raw(n, n, inv))
    }

    /// One-norm condition number `||M||_1 ||M^-1||_1`.
    pub fn condition_1(&self) -> Result<f64> {
        Ok(self.norm_1() * self.inverse()?.norm_1())
    }

    /// `M^k` by repeated squaring.
    pub fn pow(&self, mut k: u32) -> Result<Mat> {
        if !self.is_square() {
            return validation("matrix power needs a square matrix");
        }
        let mut base = self.clone();
        let mut acc = Mat::identity(self.rows);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.matmul(&base)?;
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base)?;
            }
        }
        Ok(acc)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = LinalgError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Mat::from_rows(&rows)
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

/// Dense vector with finite entries (plant states and inputs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return validation("vector has non-finite entries");
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Wraps entries produced by arithmetic; may hold non-finite values after
    /// an overflow, which callers detect with [`Vector::is_finite`].
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, k: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * k).collect())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = LinalgError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JacobiOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub symmetry_tol: f64,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        Self {
            tol: JACOBI_TOL,
            max_sweeps: JACOBI_MAX_SWEEPS,
            symmetry_tol: SYMMETRY_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymEigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Off-diagonal Frobenius norm left after the last sweep.
    pub max_offdiag_residual: f64,
}

impl SymEigResult {
    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }
}

fn offdiag_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigen-decomposition. Returns the eigenvalues (ascending) and
/// the orthogonal matrix whose columns are the matching eigenvectors.
pub fn sym_eigen_with(m: &Mat, opts: JacobiOptions) -> Result<(SymEigResult, Mat)> {
    if !m.is_square() {
        return validation(format!("eigenvalues need a square matrix, got {}x{}", m.rows, m.cols));
    }
    if !m.is_symmetric(opts.symmetry_tol) {
        return validation("matrix is not symmetric");
    }
    let n = m.rows;
    let mut a = m.symmetrize().data;
    let mut v = Mat::identity(n).data;
    let target = opts.tol * m.frobenius_norm();
    let mut residual = offdiag_norm(&a, n);
    let mut sweeps = 0;
    while residual > target {
        if sweeps == opts.max_sweeps {
            return numeric(format!(
                "Jacobi did not converge in {} sweeps (residual {residual:e})",
                opts.max_sweeps
            ));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        residual = offdiag_norm(&a, n);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vecs.set(i, new_j, v[i * n + old_j]);
        }
    }
    Ok((
        SymEigResult {
            eigenvalues,
            max_offdiag_residual: residual,
        },
        vecs,
    ))
}

pub fn sym_eigenvalues(m: &Mat) -> Result<SymEigResult> {
    sym_eigen_with(m, JacobiOptions::default()).map(|(r, _)| r)
}

/// True iff the smallest eigenvalue of the symmetric `m` is at least `-tol`.
pub fn is_psd(m: &Mat, tol: f64) -> Result<bool> {
    Ok(sym_eigenvalues(m)?.min() >= -tol)
}

/// Lower-triangular `L` with `L L^T = m`.
pub fn cholesky(m: &Mat) -> Result<Mat> {
    if !m.is_symmetric(SYMMETRY_TOL) {
        return validation("Cholesky needs a symmetric matrix");
    }
    let n = m.rows;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return numeric(format!("matrix is not positive definite: pivot {j} is {d:e}"));
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Largest `lambda` with `det(S - lambda P) = 0`, for symmetric `S` and
/// positive-definite `P`: the smallest scalar `c` such that `S <= c P`.
pub fn max_generalized_eig(s: &Mat, p: &Mat) -> Result<f64> {
    let l_inv = cholesky(p)?.inverse()?;
    let w = l_inv.matmul(s)?.matmul(&l_inv.transpose())?;
    Ok(sym_eigenvalues(&w.symmetrize())?.max())
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() || a.rows != b.len() {
        return validation("linear system dimensions do not match");
    }
    let n = a.rows;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    for col in 0..n {
        let (piv, piv_val) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if scale == 0.0 || piv_val <= 1e-13 * scale {
            return numeric(format!("singular linear system at column {col}"));
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            x.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = m[r * n + col] / m[col * n + col];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= f * m[col * n + j];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in (col + 1)..n {
            s -= m[col * n + j] * x[j];
        }
        x[col] = s / m[col * n + col];
    }
    Ok(x)
}

/// `||F^T P F - beta P + rhs||_F`.
pub fn stein_residual(f: &Mat, beta: f64, p: &Mat, rhs: &Mat) -> Result<f64> {
    let lhs = p.congruence(f)?.sub(&p.scale(beta))?.add(rhs)?;
    Ok(lhs.frobenius_norm())
}

/// Solves `F^T P F - beta P = -rhs` for symmetric positive-definite `P`.
///
/// The caller is expected to have checked that the spectral radius of `F` is
/// below `sqrt(beta)` (see [`spectral_radius_below`]); a singular vectorised
/// system is reported as a numeric error.
pub fn solve_stein(f: &Mat, beta: f64, rhs: &Mat) -> Result<Mat> {
    if !f.is_square() || !rhs.is_square() || f.rows != rhs.rows {
        return validation("Stein equation needs square F and rhs of equal order");
    }
    if !rhs.is_symmetric(SYMMETRY_TOL) {
        return validation("Stein right-hand side must be symmetric");
    }
    let n = f.rows;
    let nn = n * n;
    // Row (i, j) of the vectorised system holds the coefficients of P_kl in
    // (F^T P F)_ij - beta P_ij = sum_kl F_ki F_lj P_kl - beta P_ij.
    let mut g = Mat::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                for l in 0..n {
                    g.data[row * nn + k * n + l] = f[(k, i)] * f[(l, j)];
                }
            }
            g.data[row * nn + row] -= beta;
        }
    }
    let b: Vec<f64> = rhs.data.iter().map(|v| -v).collect();
    let x = solve_linear(&g, &b).map_err(|e| match e {
        LinalgError::Numeric(m) => LinalgError::Numeric(format!(
            "Stein system singular ({m}); spectral radius of F must be below sqrt(beta)"
        )),
        other => other,
    })?;
    let p = Mat::raw(n, n, x).symmetrize();
    if !p.is_finite() {
        return numeric("Stein solution is not finite");
    }
    let residual = stein_residual(f, beta, &p, rhs)?;
    let bound = STEIN_RESIDUAL_TOL * rhs.frobenius_norm();
    if residual > bound {
        return numeric(format!("Stein residual {residual:e} exceeds {bound:e}"));
    }
    cholesky(&p).map_err(|_| {
        LinalgError::Numeric(
            "Stein solution is not positive definite; spectral radius precondition violated"
                .into(),
        )
    })?;
    Ok(p)
}

/// Spectral radius of a 1x1 or 2x2 matrix from its characteristic polynomial.
pub fn spectral_radius_small(f: &Mat) -> Result<f64> {
    match (f.rows, f.cols) {
        (1, 1) => Ok(f[(0, 0)].abs()),
        (2, 2) => {
            let tr = f.trace();
            let det = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
            let disc = tr * tr / 4.0 - det;
            if disc >= 0.0 {
                let r = disc.sqrt();
                Ok((tr / 2.0 + r).abs().max((tr / 2.0 - r).abs()))
            } else {
                Ok(det.sqrt())
            }
        }
        _ => validation("analytic spectral radius only for order <= 2"),
    }
}

/// Sufficient test that every eigenvalue of `f` lies strictly inside the disc
/// of radius `bound`: exact for order <= 2, otherwise
/// `||F^64||_F^(1/64) < bound - GROWTH_TEST_MARGIN`.
pub fn spectral_radius_below(f: &Mat, bound: f64) -> Result<bool> {
    if !f.is_square() {
        return validation("spectral radius needs a square matrix");
    }
    if f.rows <= 2 {
        return Ok(spectral_radius_small(f)? < bound);
    }
    let growth = f.pow(64)?.frobenius_norm().powf(1.0 / 64.0);
    Ok(growth.is_finite() && growth < bound - GROWTH_TEST_MARGIN)
}

/// Rank by Gaussian elimination with complete pivoting.
pub fn rank(m: &Mat, rel_tol: f64) -> usize {
    let (rows, cols) = (m.rows, m.cols);
    let mut a = m.data.clone();
    let scale = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut r = 0;
    let mut used_cols = vec![false; cols];
    while r < rows.min(cols) {
        let mut best = (0, 0, 0.0);
        for i in r..rows {
            for j in 0..cols {
                if !used_cols[j] && a[i * cols + j].abs() > best.2 {
                    best = (i, j, a[i * cols + j].abs());
                }
            }
        }
        if best.2 <= rel_tol * scale {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            a.swap(r * cols + j, pi * cols + j);
        }
        used_cols[pj] = true;
        let pivot = a[r * cols + pj];
        for i in (r + 1)..rows {
            let f = a[i * cols + pj] / pivot;
            for j in 0..cols {
                a[i * cols + j] -= f * a[r * cols + j];
            }
        }
        r += 1;
    }
    r
}

/// `[b, Ab, ..., A^(n-1) b]`.
pub fn controllability_matrix(a: &Mat, b: &Vector) -> Result<Mat> {
    let n = a.rows;
    let mut cols = vec![b.clone()];
    for _ in 1..n {
        let next = a.mul_vec(cols.last().expect("at least one column"))?;
        cols.push(next);
    }
    let mut c = Mat::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            c.set(i, j, col[i]);
        }
    }
    Ok(c)
}

/// Monic real polynomial `prod (s - r)` as coefficients `c_0, ..., c_n`
/// (constant term first). Roots must be closed under conjugation.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

fn conjugate_closed(targets: &[Complex64]) -> bool {
    let scale = targets.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let tol = 1e-9 * scale;
    let mut unmatched: Vec<Complex64> = targets.to_vec();
    while let Some(z) = unmatched.pop() {
        if z.im.abs() <= tol {
            continue;
        }
        match unmatched.iter().position(|w| (w - z.conj()).norm() <= tol) {
            Some(pos) => {
                unmatched.swap_remove(pos);
            }
            None => return false,
        }
    }
    true
}

/// Single-input pole placement by Ackermann's formula: returns the row `k`
/// such that the eigenvalues of `A - b k` are `targets`.
pub fn pole_place_si(a: &Mat, b: &Vector, targets: &[Complex64]) -> Result<Vector> {
    if !a.is_square() {
        return validation("A must be square");
    }
    let n = a.rows;
    if b.len() != n {
        return validation(format!("b has length {}, expected {n}", b.len()));
    }
    if targets.len() != n {
        return validation(format!("need {n} target eigenvalues, got {}", targets.len()));
    }
    if !conjugate_closed(targets) {
        return validation("target eigenvalues are not closed under conjugation");
    }
    let ctrb = controllability_matrix(a, b)?;
    if rank(&ctrb, 1e-10) < n {
        return validation("(A, b) is not controllable");
    }
    let coeffs = poly_from_roots(targets);
    // phi(A) = sum_j c_j A^j, evaluated by Horner's scheme.
    let mut phi_a = Mat::identity(n).scale(coeffs[n]);
    for j in (0..n).rev() {
        phi_a = phi_a.matmul(a)?.add(&Mat::identity(n).scale(coeffs[j]))?;
    }
    // k = e_n^T C^-1 phi(A): solve C^T y = e_n, then k = y^T phi(A).
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let y = solve_linear(&ctrb.transpose(), &e_n)?;
    let k = (0..n)
        .map(|j| (0..n).map(|i| y[i] * phi_a[(i, j)]).sum())
        .collect();
    Vector::new(k).map_err(|_| LinalgError::Numeric("pole placement produced non-finite gain".into()))
}
