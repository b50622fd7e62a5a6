//! Small dense linear algebra for symmetric p×p problems.
//!
//! Everything here is sized for p up to a few dozen: Cholesky for SPD solves and
//! a cyclic Jacobi sweep for the full symmetric eigendecomposition. Inputs that
//! should be symmetric are checked against a relative tolerance and rejected,
//! never silently symmetrized.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the symmetry gate: `|a_ij - a_ji| <= SYM_TOL * max|a|`.
pub const SYM_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major matrix.
///
/// Serializes as a list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(p: usize) -> Self {
        let mut m = Mat::zeros(p, p);
        for i in 0..p {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Mat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    ///
    /// Panics on ragged input; meant for literals and tests.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Mat { rows: rows.len(), cols, data }
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

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `self^T * self`, i.e. the Gram matrix of the columns.
    pub fn gram(&self) -> Mat {
        let p = self.cols;
        let mut g = Mat::zeros(p, p);
        for i in 0..self.rows {
            let r = self.row(i);
            for a in 0..p {
                let ra = r[a];
                for b in a..p {
                    g[(a, b)] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    fn zip_with(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference; `f64::INFINITY` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Checks squareness and symmetry within `SYM_TOL * max|a|`.
    pub fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!("expected a square matrix, got {}x{}", self.rows, self.cols)));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("matrix"));
        }
        let tolerance = SYM_TOL * self.max_abs();
        let mut asymmetry: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                asymmetry = asymmetry.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        if asymmetry > tolerance {
            return Err(Error::NotSymmetric { asymmetry, tolerance });
        }
        Ok(())
    }

    /// Averages `a` with its transpose. Only for results that are symmetric in
    /// exact arithmetic; inputs are never passed through this.
    pub(crate) fn symmetrized(mut self) -> Mat {
        let p = self.rows;
        for i in 0..p {
            for j in (i + 1)..p {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
        self
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl From<Mat> for Vec<Vec<f64>> {
    fn from(m: Mat) -> Self {
        (0..m.rows).map(|i| m.row(i).to_vec()).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Mat {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let n = rows.len();
        Mat::from_row_major(n, cols, rows.into_iter().flatten().collect())
    }
}

impl std::fmt::Display for Mat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.rows {
            writeln!(f, "{:?}", self.row(i))?;
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Lower-triangular Cholesky factor `L` with `a = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    /// Factorizes a symmetric positive definite matrix.
    ///
    /// A pivot at or below `p * eps * max_diag` counts as a failure.
    pub fn new(a: &Mat) -> Result<Self> {
        a.check_symmetric()?;
        let p = a.rows();
        let max_diag = a.diag().into_iter().fold(0.0_f64, f64::max);
        let threshold = p as f64 * f64::EPSILON * max_diag;
        let mut l = Mat::zeros(p, p);
        for j in 0..p {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > threshold) {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..p {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &Mat {
        &self.l
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let p = self.dim();
        if b.len() != p {
            return Err(Error::DimensionMismatch(format!("right-hand side has length {}, expected {p}", b.len())));
        }
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in (i + 1)..p {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(y)
    }

    pub fn inverse(&self) -> Mat {
        let p = self.dim();
        let mut inv = Mat::zeros(p, p);
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for i in 0..p {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrized()
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    Cholesky::new(a)?.solve(b)
}

/// Inverse of a symmetric positive definite matrix.
pub fn inv_spd(a: &Mat) -> Result<Mat> {
    Ok(Cholesky::new(a)?.inverse())
}

/// Full eigendecomposition of a symmetric matrix.
///
/// `values` ascend; column `k` of `vectors` is the unit eigenvector for `values[k]`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl SymEigen {
    /// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
    pub fn new(a: &Mat) -> Result<Self> {
        a.check_symmetric()?;
        let p = a.rows();
        let mut m = a.clone().symmetrized();
        let mut v = Mat::identity(p);
        let scale = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 || p == 1 {
            return Ok(SymEigen { values: m.diag(), vectors: v });
        }

        let mut converged = false;
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..p)
                .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)] * m[(i, j)])
                .sum::<f64>()
                .sqrt();
            if off <= f64::EPSILON * 1e-2 * scale {
                converged = true;
                break;
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    let aij = m[(i, j)];
                    if aij == 0.0 {
                        continue;
                    }
                    let aii = m[(i, i)];
                    let ajj = m[(j, j)];
                    let theta = (ajj - aii) / (2.0 * aij);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let mki = m[(k, i)];
                        let mkj = m[(k, j)];
                        m[(k, i)] = c * mki - s * mkj;
                        m[(k, j)] = s * mki + c * mkj;
                    }
                    for k in 0..p {
                        let mik = m[(i, k)];
                        let mjk = m[(j, k)];
                        m[(i, k)] = c * mik - s * mjk;
                        m[(j, k)] = s * mik + c * mjk;
                    }
                    m[(i, j)] = 0.0;
                    m[(j, i)] = 0.0;
                    for k in 0..p {
                        let vki = v[(k, i)];
                        let vkj = v[(k, j)];
                        v[(k, i)] = c * vki - s * vkj;
                        v[(k, j)] = s * vki + c * vkj;
                    }
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence { sweeps: JACOBI_MAX_SWEEPS });
        }

        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)]));
        let values = order.iter().map(|&k| m[(k, k)]).collect();
        let mut vectors = Mat::zeros(p, p);
        for (dst, &src) in order.iter().enumerate() {
            for r in 0..p {
                vectors[(r, dst)] = v[(r, src)];
            }
        }
        Ok(SymEigen { values, vectors })
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    /// `V f(Λ) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let p = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Mat::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let s: f64 = (0..p).map(|k| self.vectors[(i, k)] * fv[k] * self.vectors[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_sym_extremes(a: &Mat) -> Result<(f64, f64)> {
    if a.rows() == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let e = SymEigen::new(a)?;
    Ok((e.min(), e.max()))
}

/// Spectral norm. Symmetric inputs use the eigenvalues directly.
pub fn op_norm(a: &Mat) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0.0);
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix"));
    }
    if a.is_square() && a.check_symmetric().is_ok() {
        let (lo, hi) = eig_sym_extremes(a)?;
        return Ok(lo.abs().max(hi.abs()));
    }
    let gram = if a.rows() >= a.cols() { a.gram() } else { a.transpose().gram() };
    let (_, hi) = eig_sym_extremes(&gram)?;
    Ok(hi.max(0.0).sqrt())
}

/// Loewner order test: true iff `λ_min(b - a) >= -tol`.
///
/// The computed eigenvalue carries rounding error of order `p·ε·‖b − a‖`, which
/// is added to `tol` so exactly singular differences still compare as ordered.
pub fn psd_leq(a: &Mat, b: &Mat, tol: f64) -> Result<bool> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    a.check_symmetric()?;
    b.check_symmetric()?;
    let (lo, hi) = eig_sym_extremes(&b.sub(a)?.symmetrized())?;
    let rounding = 4.0 * a.rows() as f64 * f64::EPSILON * lo.abs().max(hi.abs());
    Ok(lo >= -(tol + rounding))
}

/// Symmetric inverse square root of an SPD matrix.
pub fn inv_sqrt_spd(a: &Mat) -> Result<Mat> {
    let e = SymEigen::new(a)?;
    let p = a.rows() as f64;
    if !(e.min() > p * f64::EPSILON * e.max().abs()) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(e.map(|l| 1.0 / l.sqrt()))
}
