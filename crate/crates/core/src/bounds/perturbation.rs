//! Runtime checkers for classical perturbation results, plus the closed form
//! of the linear recurrence behind the error-propagation bounds.

use serde::{Deserialize, Serialize};

use super::BoundError;
use crate::linalg::{svd, DenseMatrix};

fn same_shape(m: &DenseMatrix, delta: &DenseMatrix) -> Result<(), BoundError> {
    if m.shape() != delta.shape() {
        return Err(BoundError::Mismatch(format!(
            "perturbation is {}x{} but matrix is {}x{}",
            delta.rows(),
            delta.cols(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// `max_i (|σ_i(M+Δ) − σ_i(M)| − ||Δ||₂)`. Non-positive means the singular
/// values moved by at most the spectral norm of the perturbation.
pub fn weyl_check(m: &DenseMatrix, delta: &DenseMatrix) -> Result<f64, BoundError> {
    same_shape(m, delta)?;
    let s = m.singular_values()?;
    let st = m.add(delta)?.singular_values()?;
    let norm = delta.spectral_norm()?;
    Ok(s.iter()
        .zip(&st)
        .map(|(a, b)| (a - b).abs() - norm)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedinCheck {
    /// `||sin θ(Ũ₁, U₁)||_F² + ||sin θ(Ṽ₁, V₁)||_F²`
    pub lhs: f64,
    /// `(||U₁ᵀΔ||_F² + ||ΔV₁||_F²) / gap²`, infinite when `gap` is zero.
    pub rhs: f64,
    /// `min{ min_{i≤r<j} |σ_i − σ̃_j|, min_{i≤r} σ_i }`
    pub gap: f64,
}

impl WedinCheck {
    /// The inequality only applies when the gap is positive.
    pub fn applies(&self) -> bool {
        self.gap > 0.0
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Sum of squared sines of the principal angles between the column spaces
/// of two orthonormal `n × r` blocks.
fn sin_theta_sq(p: &DenseMatrix, q: &DenseMatrix) -> Result<f64, BoundError> {
    let cross = p.transpose().matmul(q)?;
    let cos = cross.singular_values()?;
    Ok(cos.iter().map(|c| (1.0 - c * c).max(0.0)).sum())
}

fn leading_columns(m: &DenseMatrix, r: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), r, |i, j| m[(i, j)]).expect("sub-block of a finite matrix")
}

/// Both sides of the sin-θ inequality for the leading `r_block` singular
/// subspaces of `M` and `M + Δ`.
pub fn wedin_check(m: &DenseMatrix, delta: &DenseMatrix, r_block: usize) -> Result<WedinCheck, BoundError> {
    same_shape(m, delta)?;
    let p = m.rows().min(m.cols());
    if r_block == 0 || r_block > p {
        return Err(BoundError::Mismatch(format!("r_block = {r_block} must lie in 1..={p}")));
    }
    let base = svd(m)?;
    let pert = svd(&m.add(delta)?)?;
    let u1 = leading_columns(&base.left_vectors, r_block);
    let v1 = leading_columns(&base.right_vectors, r_block);
    let ut1 = leading_columns(&pert.left_vectors, r_block);
    let vt1 = leading_columns(&pert.right_vectors, r_block);

    let lhs = sin_theta_sq(&ut1, &u1)? + sin_theta_sq(&vt1, &v1)?;
    let num = u1.transpose().matmul(delta)?.frobenius_norm().powi(2) + delta.matmul(&v1)?.frobenius_norm().powi(2);

    let head = &base.singular_values[..r_block];
    let mut gap = head.iter().copied().fold(f64::INFINITY, f64::min);
    for &si in head {
        for &sj in &pert.singular_values[r_block..] {
            gap = gap.min((si - sj).abs());
        }
    }
    let rhs = if gap > 0.0 { num / (gap * gap) } else { f64::INFINITY };
    Ok(WedinCheck { lhs, rhs, gap })
}

fn check_coeffs(a: &[f64], b: &[f64]) -> Result<(), BoundError> {
    if a.len() != b.len() {
        return Err(BoundError::Mismatch(format!(
            "coefficient lists differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if let Some(v) = a.iter().chain(b).find(|v| !(**v >= 0.0)) {
        return Err(BoundError::NegativeCoefficient(*v));
    }
    Ok(())
}

/// Closed form of `Q₁ = b₀`, `Q_{k+1} = a_k Q_k + b_k`:
/// `Q_k = Σ_{k'=0}^{k−1} b_{k'} Π_{j=k'+1}^{k−1} a_j`.
///
/// Returns `[Q₁, …, Q_L]` for lists of length `L`; `a₀` is never read.
pub fn unroll_recurrence(a: &[f64], b: &[f64]) -> Result<Vec<f64>, BoundError> {
    check_coeffs(a, b)?;
    Ok((1..=a.len())
        .map(|k| (0..k).map(|kp| b[kp] * a[kp + 1..k].iter().product::<f64>()).sum())
        .collect())
}

/// The same sequence by direct iteration.
pub fn iterate_recurrence(a: &[f64], b: &[f64]) -> Result<Vec<f64>, BoundError> {
    check_coeffs(a, b)?;
    let mut out = Vec::with_capacity(a.len());
    let mut q = 0.0;
    for k in 0..a.len() {
        q = if k == 0 { b[0] } else { a[k] * q + b[k] };
        out.push(q);
    }
    Ok(out)
}
