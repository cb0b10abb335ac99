//! Dense matrices and spectral utilities.
//!
//! Storage is row-major `f64`. Factorizations go through `faer` on zero-copy
//! views, so nothing here allocates more than the result it returns.

use std::fmt;
use std::ops::{Index, IndexMut};

use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyDimension { rows: usize, cols: usize },
    #[error("entry buffer has length {len}, expected {rows}x{cols}")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("SVD failed to converge on a {rows}x{cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize },
    #[error("zero matrix has no principal direction")]
    ZeroMatrix,
    #[error("{rows}x{cols} matrix is numerically rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficient { rows: usize, cols: usize, ratio: f64 },
    #[error("empty singular spectrum")]
    EmptySpectrum,
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
}

fn mismatch(op: &'static str, expected: impl fmt::Display, found: impl fmt::Display) -> LinalgError {
    LinalgError::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// Real matrix with explicit dimensions, stored row-major.
///
/// Every constructor rejects non-finite entries, and every operation that
/// could overflow checks its output, so a `DenseMatrix` is always finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = LinalgError;
    fn try_from(raw: RawMatrix) -> Result<Self, LinalgError> {
        DenseMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<DenseMatrix> for RawMatrix {
    fn from(m: DenseMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for v in self.row(i).iter().take(8) {
                write!(f, "{v:>12.5e} ")?;
            }
            if self.cols > 8 {
                write!(f, "...")?;
            }
            writeln!(f)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyDimension { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
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

    /// Rectangular matrix with `diag` on its main diagonal.
    pub fn diagonal(rows: usize, cols: usize, diag: &[f64]) -> Result<Self, LinalgError> {
        if diag.len() > rows.min(cols) {
            return Err(mismatch("diagonal", rows.min(cols), diag.len()));
        }
        let mut m = Self::zeros(rows, cols);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, LinalgError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(mismatch("from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// `u vᵀ`.
    pub fn outer(u: &[f64], v: &[f64]) -> Result<Self, LinalgError> {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
    }

    pub fn from_faer(m: MatRef<'_, f64>) -> Result<Self, LinalgError> {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Zero-copy `faer` view.
    pub fn as_faer(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn check_finite(&self) -> Result<(), LinalgError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(p) => Err(LinalgError::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self[(i, j)]);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(mismatch(
                "matmul",
                format!("lhs cols {}", self.cols),
                format!("rhs rows {}", rhs.rows),
            ));
        }
        Self::from_faer((self.as_faer() * rhs.as_faer()).as_ref())
    }

    /// `self · selfᵀ`.
    pub fn gram(&self) -> Self {
        let a = self.as_faer();
        let g: Mat<f64> = a * a.transpose();
        // Entries are sums of products of finite values; overflow is the only
        // way to fail and is caught here.
        Self::from_faer(g.as_ref()).expect("gram of a finite matrix overflowed")
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.cols {
            return Err(mismatch("matvec", self.cols, x.len()));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn tr_matvec(&self, y: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if y.len() != self.rows {
            return Err(mismatch("tr_matvec", self.rows, y.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        Ok(out)
    }

    fn same_shape(&self, other: &DenseMatrix, op: &'static str) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(mismatch(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        self.same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        self.same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self::new(self.rows, self.cols, data)
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self, LinalgError> {
        Self::new(self.rows, self.cols, self.data.iter().map(|v| alpha * v).collect())
    }

    /// `self += alpha · u vᵀ`.
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) -> Result<(), LinalgError> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(mismatch(
                "add_outer",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", u.len(), v.len()),
            ));
        }
        for (i, &ui) in u.iter().enumerate() {
            let s = alpha * ui;
            if s != 0.0 {
                let cols = self.cols;
                axpy(s, v, &mut self.data[i * cols..(i + 1) * cols]);
            }
        }
        self.check_finite()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// All singular values, non-increasing.
    pub fn singular_values(&self) -> Result<Vec<f64>, LinalgError> {
        let mut s = self
            .as_faer()
            .singular_values()
            .map_err(|_| LinalgError::SvdNoConvergence {
                rows: self.rows,
                cols: self.cols,
            })?;
        s.sort_by(|a, b| b.total_cmp(a));
        Ok(s)
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> Result<f64, LinalgError> {
        Ok(self.singular_values()?[0])
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha · x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin SVD `M = U diag(σ) Vᵀ` with `p = min(rows, cols)` columns.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub singular_values: Vec<f64>,
    /// `m × p`, orthonormal columns.
    pub left_vectors: DenseMatrix,
    /// `n × p`, orthonormal columns.
    pub right_vectors: DenseMatrix,
}

impl SvdResult {
    /// Count of singular values above `RANK_TOL · σ_max`.
    pub fn numerical_rank(&self) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count()
    }

    /// `U_k diag(σ_k) V_kᵀ`, the best rank-`k` approximation.
    pub fn truncated(&self, k: usize) -> DenseMatrix {
        let (m, n) = (self.left_vectors.rows(), self.right_vectors.rows());
        let mut out = DenseMatrix::zeros(m, n);
        for i in 0..k.min(self.singular_values.len()) {
            out.add_outer(
                self.singular_values[i],
                &self.left_vectors.column(i),
                &self.right_vectors.column(i),
            )
            .expect("truncated SVD shapes are consistent");
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.truncated(self.singular_values.len())
    }

    pub fn triple(&self, i: usize) -> SingularTriple {
        SingularTriple {
            sigma: self.singular_values[i],
            u: self.left_vectors.column(i),
            v: self.right_vectors.column(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn svd(m: &DenseMatrix) -> Result<SvdResult, LinalgError> {
    let err = || LinalgError::SvdNoConvergence {
        rows: m.rows(),
        cols: m.cols(),
    };
    let s = m.as_faer().thin_svd().map_err(|_| err())?;
    let p = m.rows().min(m.cols());
    let sv = s.S().column_vector();
    let mut order: Vec<usize> = (0..p).collect();
    // faer already sorts, but the contract is ours to keep.
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (u, v) = (s.U(), s.V());
    let singular_values: Vec<f64> = order.iter().map(|&i| sv[i].max(0.0)).collect();
    let left_vectors = DenseMatrix::from_fn(m.rows(), p, |i, j| u[(i, order[j])]).map_err(|_| err())?;
    let right_vectors = DenseMatrix::from_fn(m.cols(), p, |i, j| v[(i, order[j])]).map_err(|_| err())?;
    Ok(SvdResult {
        singular_values,
        left_vectors,
        right_vectors,
    })
}

pub fn top_singular_triple(m: &DenseMatrix) -> Result<SingularTriple, LinalgError> {
    if m.max_abs() == 0.0 {
        return Err(LinalgError::ZeroMatrix);
    }
    Ok(svd(m)?.triple(0))
}

/// Flip `(u, v)` jointly so that `u` lies closest to `reference_u`.
///
/// Exact ties keep the candidate as is.
pub fn align_sign(
    candidate_u: &[f64],
    candidate_v: &[f64],
    reference_u: &[f64],
    reference_v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    if candidate_u.len() != reference_u.len() {
        return Err(mismatch("align_sign", reference_u.len(), candidate_u.len()));
    }
    if candidate_v.len() != reference_v.len() {
        return Err(mismatch("align_sign", reference_v.len(), candidate_v.len()));
    }
    let dist = |s: f64| -> f64 {
        candidate_u
            .iter()
            .zip(reference_u)
            .map(|(c, r)| (s * c - r).powi(2))
            .sum()
    };
    let s = if dist(1.0) <= dist(-1.0) { 1.0 } else { -1.0 };
    Ok((
        candidate_u.iter().map(|x| s * x).collect(),
        candidate_v.iter().map(|x| s * x).collect(),
    ))
}

/// `T_k = min(min_{j>k} |σ_k − σ_j|, σ_k)` with 1-based `k`.
pub fn singular_gap_tk(sigmas: &[f64], k: usize) -> Result<f64, LinalgError> {
    if sigmas.is_empty() {
        return Err(LinalgError::EmptySpectrum);
    }
    if k == 0 || k > sigmas.len() {
        return Err(LinalgError::IndexOutOfRange {
            index: k,
            len: sigmas.len(),
        });
    }
    let sk = sigmas[k - 1];
    Ok(sigmas[k..].iter().fold(sk, |t, &sj| t.min((sk - sj).abs())))
}

/// `σ_max / σ_min` over the `min(rows, cols)` singular values.
pub fn condition_number(m: &DenseMatrix) -> Result<f64, LinalgError> {
    let s = m.singular_values()?;
    let (smax, smin) = (s[0], *s.last().unwrap());
    if !(smin > RANK_TOL * smax) {
        return Err(LinalgError::RankDeficient {
            rows: m.rows(),
            cols: m.cols(),
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }
    Ok(smax / smin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowSolution {
    pub coeffs: Vec<f64>,
    /// `||aᵀX − targetᵀ||₂`
    pub residual: f64,
}

/// Row least squares `argmin_a ||aᵀX − tᵀ||₂` for a fixed wide `X`.
///
/// Factorizes `Xᵀ` once, so repeated solves against the same `X` are cheap.
pub struct RowLeastSquares {
    x: DenseMatrix,
    qr: faer::linalg::solvers::Qr<f64>,
    sigma_max: f64,
    sigma_min: f64,
}

impl fmt::Debug for RowLeastSquares {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RowLeastSquares")
            .field("shape", &self.x.shape())
            .field("sigma_max", &self.sigma_max)
            .field("sigma_min", &self.sigma_min)
            .finish()
    }
}

impl RowLeastSquares {
    pub fn new(x: &DenseMatrix) -> Result<Self, LinalgError> {
        let (d, n) = x.shape();
        let s = x.singular_values()?;
        let (sigma_max, sigma_min) = (s[0], s[d.min(n) - 1]);
        if n < d || !(sigma_min > RANK_TOL * sigma_max) {
            return Err(LinalgError::RankDeficient {
                rows: d,
                cols: n,
                ratio: if n < d || sigma_max == 0.0 { 0.0 } else { sigma_min / sigma_max },
            });
        }
        let qr = x.as_faer().transpose().qr();
        Ok(Self {
            x: x.clone(),
            qr,
            sigma_max,
            sigma_min,
        })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn condition_number(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }

    pub fn solve(&self, target: &[f64]) -> Result<RowSolution, LinalgError> {
        let (d, n) = self.x.shape();
        if target.len() != n {
            return Err(mismatch("least_squares_row", n, target.len()));
        }
        let rhs = Mat::from_fn(n, 1, |i, _| target[i]);
        let sol = self.qr.solve_lstsq(&rhs);
        let coeffs: Vec<f64> = (0..d).map(|i| sol[(i, 0)]).collect();
        if let Some(p) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { row: p, col: 0 });
        }
        let fit = self.x.tr_matvec(&coeffs)?;
        let residual = fit
            .iter()
            .zip(target)
            .map(|(f, t)| (f - t).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(RowSolution { coeffs, residual })
    }
}

/// One-shot row least squares; see [`RowLeastSquares`] for repeated solves.
pub fn least_squares_row(target: &[f64], x: &DenseMatrix) -> Result<RowSolution, LinalgError> {
    RowLeastSquares::new(x)?.solve(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_rejects_nan() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::new(0, 2, vec![]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn transpose_and_products() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let at = a.transpose();
        assert_eq!(at.shape(), (3, 2));
        assert_eq!(at[(2, 1)], 6.0);
        let g = a.matmul(&at).unwrap();
        assert_eq!(g, a.gram());
        assert_eq!(g[(0, 1)], 32.0);
        assert_eq!(a.matvec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert_eq!(a.tr_matvec(&[1.0, 1.0]).unwrap(), vec![5.0, 7.0, 9.0]);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn gap_examples() {
        assert_eq!(singular_gap_tk(&[5.0, 3.0, 1.0], 1).unwrap(), 2.0);
        assert_eq!(singular_gap_tk(&[5.0, 3.0, 1.0], 3).unwrap(), 1.0);
        assert_eq!(singular_gap_tk(&[4.0, 4.0, 1.0], 1).unwrap(), 0.0);
        assert!(singular_gap_tk(&[], 1).is_err());
        assert!(singular_gap_tk(&[1.0], 2).is_err());
    }

    #[test]
    fn align_sign_tie_keeps_candidate() {
        let (u, v) = align_sign(&[0.0, 1.0], &[1.0], &[1.0, 0.0], &[1.0]).unwrap();
        assert_eq!(u, vec![0.0, 1.0]);
        assert_eq!(v, vec![1.0]);
        let (u, v) = align_sign(&[-1.0, 0.0], &[-1.0], &[1.0, 0.0], &[1.0]).unwrap();
        assert_eq!((u, v), (vec![1.0, 0.0], vec![1.0]));
    }

    #[test]
    fn zero_matrix_has_no_triple() {
        assert_eq!(
            top_singular_triple(&DenseMatrix::zeros(3, 2)),
            Err(LinalgError::ZeroMatrix)
        );
    }
}
