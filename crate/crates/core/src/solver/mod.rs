//! Sequential rank-1 regression with deflation.
//!
//! Each step fits `b aᵀ` to the current residual `Y_k` and deflates
//! `Y_{k+1} = Y_k − b aᵀX`. The exact solver takes the best rank-1 fit from
//! the SVD of `Y_k`; the inexact solver runs gradient descent for a budgeted
//! number of iterations and records how far it landed from the exact fit.

mod allocation;
mod gd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocation::{make_allocation, AllocationPlan, AllocationStrategy};
pub use gd::{GdConfig, GdOutcome, StepSize};

use crate::linalg::{norm2, top_singular_triple, DenseMatrix, LinalgError, RowLeastSquares, RANK_TOL};
use crate::rng::split_seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("rank-1 target is the zero matrix")]
    ZeroTarget,
    #[error("gradient descent diverged at iteration {iteration} (step_a = {step_a:e}, step_b = {step_b:e})")]
    Diverged { step_a: f64, step_b: f64, iteration: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("trace has no components")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Exact,
    Inexact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneComponent {
    /// Length `d`.
    pub a: Vec<f64>,
    /// Length `m`.
    pub b: Vec<f64>,
    /// `||b aᵀ − b̄ āᵀ||_F` against the exact fit of the same residual.
    pub delta_fro: f64,
    pub iters_used: usize,
    /// `||Y_{k+1}||_F`
    pub residual_fro_after: f64,
    /// `σ₁(Y_k)`, the singular value this step was aiming at.
    pub target_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub components: Vec<RankOneComponent>,
    pub mode: SolveMode,
    pub y_fro_initial: f64,
    pub allocation: Option<AllocationPlan>,
    /// Set when the residual hit numerical zero before `r` components were
    /// fitted; the remaining components are zero pairs.
    pub rank_exhausted: bool,
}

impl SolveTrace {
    /// `||Y − Σ b aᵀX||_F`
    pub fn training_error(&self) -> f64 {
        self.components.last().map_or(self.y_fro_initial, |c| c.residual_fro_after)
    }

    pub fn deltas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.delta_fro).collect()
    }

    pub fn iters(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.iters_used).collect()
    }
}

/// Exact minimizer of one step, with `||b||₂ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactStep {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: f64,
    /// Least-squares residual of `aᵀX = σvᵀ`.
    pub lsq_residual: f64,
}

/// A design matrix `X` (`d × n`, `n ≥ d`, full row rank) prepared for
/// repeated rank-1 solves.
#[derive(Debug)]
pub struct Design {
    lsq: RowLeastSquares,
    gram: std::sync::OnceLock<DenseMatrix>,
}

impl Design {
    pub fn new(x: &DenseMatrix) -> Result<Self, SolveError> {
        Ok(Self {
            lsq: RowLeastSquares::new(x)?,
            gram: std::sync::OnceLock::new(),
        })
    }

    pub fn x(&self) -> &DenseMatrix {
        self.lsq.x()
    }

    pub fn sigma_max(&self) -> f64 {
        self.lsq.sigma_max()
    }

    pub fn sigma_min(&self) -> f64 {
        self.lsq.sigma_min()
    }

    pub fn condition_number(&self) -> f64 {
        self.lsq.condition_number()
    }

    /// `XXᵀ`, computed on first use.
    pub fn gram(&self) -> &DenseMatrix {
        self.gram.get_or_init(|| self.x().gram())
    }

    fn check_target(&self, yk: &DenseMatrix) -> Result<(), SolveError> {
        if yk.cols() != self.x().cols() {
            return Err(SolveError::Shape(format!(
                "target has {} columns but X has {}",
                yk.cols(),
                self.x().cols()
            )));
        }
        Ok(())
    }

    /// Best rank-1 fit: `b = u₁`, `a` solves `aᵀX = σ₁v₁ᵀ`.
    ///
    /// The sign of `u₁` is fixed so its largest-magnitude entry is positive.
    pub fn best_rank1_exact(&self, yk: &DenseMatrix) -> Result<ExactStep, SolveError> {
        self.check_target(yk)?;
        let t = match top_singular_triple(yk) {
            Err(LinalgError::ZeroMatrix) => return Err(SolveError::ZeroTarget),
            other => other?,
        };
        let pivot = t
            .u
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > t.u[best].abs() { i } else { best });
        let s = if t.u[pivot] < 0.0 { -1.0 } else { 1.0 };
        let target: Vec<f64> = t.v.iter().map(|v| s * t.sigma * v).collect();
        let sol = self.lsq.solve(&target)?;
        Ok(ExactStep {
            a: sol.coeffs,
            b: t.u.iter().map(|u| s * u).collect(),
            sigma: t.sigma,
            lsq_residual: sol.residual,
        })
    }

    pub fn rank1_gd(&self, yk: &DenseMatrix, config: &GdConfig, seed: u64) -> Result<GdOutcome, SolveError> {
        self.check_target(yk)?;
        let sigma = yk.spectral_norm()?;
        gd::run(self, yk, config, config.max_iters, seed, sigma)
    }

    /// `||b aᵀ − b̄ āᵀ||_F` with `(ā, b̄)` the exact fit of `Y_k`.
    pub fn measure_delta(&self, yk: &DenseMatrix, a: &[f64], b: &[f64]) -> Result<f64, SolveError> {
        let exact = self.best_rank1_exact(yk)?;
        product_distance(a, b, &exact.a, &exact.b)
    }

    /// `Y_k − b aᵀX`.
    pub fn deflate(&self, yk: &DenseMatrix, a: &[f64], b: &[f64]) -> Result<DenseMatrix, SolveError> {
        self.check_target(yk)?;
        if a.len() != self.x().rows() || b.len() != yk.rows() {
            return Err(SolveError::Shape(format!(
                "pair has lengths ({}, {}), expected ({}, {})",
                a.len(),
                b.len(),
                self.x().rows(),
                yk.rows()
            )));
        }
        let xa = self.x().tr_matvec(a)?;
        let mut next = yk.clone();
        next.add_outer(-1.0, b, &xa)?;
        Ok(next)
    }

    pub fn solve_exact(&self, y: &DenseMatrix, r: usize) -> Result<SolveTrace, SolveError> {
        self.run(y, r, None, &GdConfig::default(), 0, &mut |_| {})
    }

    /// As [`Design::solve_exact`], also returning `Y_1, …, Y_{r+1}`.
    pub fn solve_exact_recorded(&self, y: &DenseMatrix, r: usize) -> Result<(SolveTrace, Vec<DenseMatrix>), SolveError> {
        let mut hist = Vec::with_capacity(r + 1);
        let trace = self.run(y, r, None, &GdConfig::default(), 0, &mut |yk| hist.push(yk.clone()))?;
        Ok((trace, hist))
    }

    pub fn solve_inexact(
        &self,
        y: &DenseMatrix,
        r: usize,
        plan: &AllocationPlan,
        config: &GdConfig,
        seed: u64,
    ) -> Result<SolveTrace, SolveError> {
        self.run(y, r, Some(plan), config, seed, &mut |_| {})
    }

    pub fn solve_inexact_recorded(
        &self,
        y: &DenseMatrix,
        r: usize,
        plan: &AllocationPlan,
        config: &GdConfig,
        seed: u64,
    ) -> Result<(SolveTrace, Vec<DenseMatrix>), SolveError> {
        let mut hist = Vec::with_capacity(r + 1);
        let trace = self.run(y, r, Some(plan), config, seed, &mut |yk| hist.push(yk.clone()))?;
        Ok((trace, hist))
    }

    fn run(
        &self,
        y: &DenseMatrix,
        r: usize,
        plan: Option<&AllocationPlan>,
        config: &GdConfig,
        seed: u64,
        observe: &mut dyn FnMut(&DenseMatrix),
    ) -> Result<SolveTrace, SolveError> {
        self.check_target(y)?;
        if r == 0 {
            return Err(SolveError::InvalidConfig("rank r must be at least 1".into()));
        }
        if let Some(plan) = plan {
            if plan.len() != r {
                return Err(SolveError::InvalidAllocation(format!(
                    "plan has {} budgets for r = {r}",
                    plan.len()
                )));
            }
            config.validate()?;
        }
        let (m, d) = (y.rows(), self.x().rows());
        let y_fro = y.frobenius_norm();
        let zero_floor = RANK_TOL * y_fro;
        let mut yk = y.clone();
        let mut components = Vec::with_capacity(r);
        let mut rank_exhausted = false;
        observe(&yk);
        for k in 0..r {
            let exhausted = yk.frobenius_norm() <= zero_floor;
            let exact = if exhausted {
                None
            } else {
                Some(self.best_rank1_exact(&yk)?)
            };
            let sigma = exact.as_ref().map_or(0.0, |e| e.sigma);
            let (a, b, iters_used, delta_fro) = match (plan, exact) {
                (None, Some(e)) => (e.a, e.b, 0, 0.0),
                (None, None) => {
                    rank_exhausted = true;
                    (vec![0.0; d], vec![0.0; m], 0, 0.0)
                }
                (Some(plan), exact) => {
                    let out = gd::run(self, &yk, config, plan.budgets[k], split_seed(seed, k as u64), sigma)?;
                    let delta = match exact {
                        Some(e) => product_distance(&out.a, &out.b, &e.a, &e.b)?,
                        None => {
                            rank_exhausted = true;
                            norm2(&out.a) * norm2(&out.b)
                        }
                    };
                    (out.a, out.b, out.iters_used, delta)
                }
            };
            yk = self.deflate(&yk, &a, &b)?;
            observe(&yk);
            components.push(RankOneComponent {
                a,
                b,
                delta_fro,
                iters_used,
                residual_fro_after: yk.frobenius_norm(),
                target_sigma: sigma,
            });
        }
        Ok(SolveTrace {
            components,
            mode: if plan.is_some() { SolveMode::Inexact } else { SolveMode::Exact },
            y_fro_initial: y_fro,
            allocation: plan.cloned(),
            rank_exhausted,
        })
    }
}

/// `||b₁a₁ᵀ − b₂a₂ᵀ||_F`, formed entrywise to avoid cancellation.
pub fn product_distance(a1: &[f64], b1: &[f64], a2: &[f64], b2: &[f64]) -> Result<f64, SolveError> {
    if a1.len() != a2.len() || b1.len() != b2.len() {
        return Err(SolveError::Shape("rank-1 pairs have different lengths".into()));
    }
    let mut sum = 0.0;
    for (p, q) in b1.iter().zip(b2) {
        for (x, y) in a1.iter().zip(a2) {
            let e = p * x - q * y;
            sum += e * e;
        }
    }
    Ok(sum.sqrt())
}

pub fn best_rank1_exact(yk: &DenseMatrix, x: &DenseMatrix) -> Result<ExactStep, SolveError> {
    Design::new(x)?.best_rank1_exact(yk)
}

pub fn rank1_gd(yk: &DenseMatrix, x: &DenseMatrix, config: &GdConfig, seed: u64) -> Result<GdOutcome, SolveError> {
    Design::new(x)?.rank1_gd(yk, config, seed)
}

pub fn measure_delta(yk: &DenseMatrix, x: &DenseMatrix, a: &[f64], b: &[f64]) -> Result<f64, SolveError> {
    Design::new(x)?.measure_delta(yk, a, b)
}

/// Exact sequential recovery of `r` components.
pub fn solve_exact(x: &DenseMatrix, y: &DenseMatrix, r: usize) -> Result<SolveTrace, SolveError> {
    Design::new(x)?.solve_exact(y, r)
}

/// Inexact sequential recovery; component `k` runs `plan.budgets[k]`
/// gradient steps from a seed split off `seed`.
pub fn solve_inexact(
    x: &DenseMatrix,
    y: &DenseMatrix,
    r: usize,
    plan: &AllocationPlan,
    config: &GdConfig,
    seed: u64,
) -> Result<SolveTrace, SolveError> {
    Design::new(x)?.solve_inexact(y, r, plan, config, seed)
}

/// `Σ b_k a_kᵀ`.
pub fn reconstruct_w(trace: &SolveTrace) -> Result<DenseMatrix, SolveError> {
    let first = trace.components.first().ok_or(SolveError::EmptyTrace)?;
    let mut w = DenseMatrix::zeros(first.b.len(), first.a.len());
    for c in &trace.components {
        w.add_outer(1.0, &c.b, &c.a)?;
    }
    Ok(w)
}
