//! Error-propagation bounds for the inexact sequential solver.
//!
//! Step errors `δ_k = b_k a_kᵀ − b̄_k ā_kᵀ` are amplified by later deflations.
//! Each step `j` multiplies what came before by `f_j = 2 + 6σ_j/T_j`, where
//! `T_j` is the singular gap of `Y` at `j`. All bounds below are sums of
//! these amplified errors plus a tail term for components left unfitted.

mod perturbation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use perturbation::{iterate_recurrence, unroll_recurrence, weyl_check, wedin_check, WedinCheck};

use crate::linalg::{singular_gap_tk, DenseMatrix, LinalgError};
use crate::solver::{Design, SolveError, SolveTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("degenerate singular gap: T_{index} = 0")]
    DegenerateGap { index: usize },
    #[error("inconsistent bound inputs: {0}")]
    Inconsistent(String),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error("recurrence coefficients must be non-negative, got {0}")]
    NegativeCoefficient(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Which gap enters the amplification factor at step `j`.
pub const GAP_CONVENTION: &str = "per_index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Singular values of `Y`, non-increasing.
    pub sigmas_y: Vec<f64>,
    /// `||δ_k||_F` for `k = 0..=r`, with `δ₀ = 0`.
    pub delta_fros: Vec<f64>,
    pub sigma_max_x: f64,
    pub sigma_min_x: f64,
    pub r: usize,
    /// Rank of `Y`.
    pub p: usize,
    /// Singular values of `W*`; only the noisy bound reads them.
    pub sigmas_w: Vec<f64>,
}

impl BoundInputs {
    /// Inputs for an inexact run. `p` is the numerical rank of `sigmas_y`.
    pub fn from_trace(
        sigmas_y: Vec<f64>,
        trace: &SolveTrace,
        sigma_max_x: f64,
        sigma_min_x: f64,
        sigmas_w: Vec<f64>,
    ) -> Self {
        let smax = sigmas_y.first().copied().unwrap_or(0.0);
        let p = sigmas_y
            .iter()
            .filter(|&&s| s > crate::linalg::RANK_TOL * smax)
            .count();
        let mut delta_fros = vec![0.0];
        delta_fros.extend(trace.deltas());
        Self {
            sigmas_y,
            delta_fros,
            sigma_max_x,
            sigma_min_x,
            r: trace.components.len(),
            p,
            sigmas_w,
        }
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        let bad = |msg: String| Err(BoundError::Inconsistent(msg));
        if self.r == 0 {
            return bad("r must be at least 1".into());
        }
        if self.delta_fros.len() != self.r + 1 {
            return bad(format!("{} deltas for r = {} (expected r + 1)", self.delta_fros.len(), self.r));
        }
        if self.delta_fros[0] != 0.0 {
            return bad(format!("delta_0 must be 0, got {}", self.delta_fros[0]));
        }
        if self.delta_fros.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return bad("deltas must be finite and non-negative".into());
        }
        if self.p > self.sigmas_y.len() || self.r > self.p {
            return bad(format!(
                "need r <= p <= len(sigmas_y), got r = {}, p = {}, len = {}",
                self.r,
                self.p,
                self.sigmas_y.len()
            ));
        }
        if self.sigmas_y.windows(2).any(|w| w[0] < w[1]) || self.sigmas_y.iter().any(|s| !(*s >= 0.0)) {
            return bad("sigmas_y must be non-negative and non-increasing".into());
        }
        if !(self.sigma_max_x >= self.sigma_min_x && self.sigma_min_x >= 0.0 && self.sigma_max_x.is_finite()) {
            return bad(format!(
                "need sigma_max_x >= sigma_min_x >= 0, got {} and {}",
                self.sigma_max_x, self.sigma_min_x
            ));
        }
        Ok(())
    }

    fn kappa(&self) -> Result<f64, BoundError> {
        if !(self.sigma_min_x > 0.0) {
            return Err(BoundError::Inconsistent("sigma_min_x must be positive for kappa".into()));
        }
        Ok(self.sigma_max_x / self.sigma_min_x)
    }

    /// `T_j` over the first `p` singular values, 1-based.
    pub fn gap(&self, j: usize) -> Result<f64, BoundError> {
        Ok(singular_gap_tk(&self.sigmas_y[..self.p], j)?)
    }

    /// `2 + 6σ_j/T_j`.
    fn factor(&self, j: usize) -> Result<f64, BoundError> {
        let t = self.gap(j)?;
        if t == 0.0 {
            return Err(BoundError::DegenerateGap { index: j });
        }
        Ok(2.0 + 6.0 * self.sigmas_y[j - 1] / t)
    }

    /// `Σ_{k'=from}^{k} ||δ_{k'}||_F Π_{j=k'+1}^{k} f_j`.
    fn amplified(&self, k: usize, from: usize) -> Result<f64, BoundError> {
        let mut sum = 0.0;
        let mut prod = 1.0;
        for kp in (from..=k).rev() {
            sum += self.delta_fros[kp] * prod;
            if kp > from {
                prod *= self.factor(kp)?;
            }
        }
        Ok(sum)
    }
}

/// `E(k) = σ_max(X) Σ_{k'=0}^{k−1} ||δ_{k'}||_F Π_{j=k'+1}^{k−1} f_j` for
/// `1 ≤ k ≤ r`.
pub fn compute_e_of_k(inputs: &BoundInputs, k: usize) -> Result<f64, BoundError> {
    inputs.validate()?;
    if k == 0 || k > inputs.r {
        return Err(BoundError::Inconsistent(format!("k = {k} outside 1..={}", inputs.r)));
    }
    Ok(inputs.sigma_max_x * inputs.amplified(k - 1, 0)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBound {
    pub rhs: f64,
    pub e_of_k: Vec<f64>,
    /// `E(k) < ½ min_{j>k} |σ_k − σ_j|`, the gap to zero at the last index.
    pub conditions: Vec<bool>,
}

impl TrainingBound {
    pub fn all_conditions(&self) -> bool {
        self.conditions.iter().all(|&c| c)
    }
}

/// Bound on `||Y − Σ b_k a_kᵀX||_F`: the unfitted tail `Σ_{k>r} σ_k` plus
/// `σ_max(X) Σ_{k=1}^{r} Σ_{k'=0}^{k} ||δ_{k'}||_F Π_{j=k'+1}^{k} f_j`.
pub fn thm31_training_bound(inputs: &BoundInputs) -> Result<TrainingBound, BoundError> {
    inputs.validate()?;
    let tail: f64 = inputs.sigmas_y[inputs.r..inputs.p].iter().sum();
    let mut prop = 0.0;
    let mut e_of_k = Vec::with_capacity(inputs.r);
    let mut conditions = Vec::with_capacity(inputs.r);
    for k in 1..=inputs.r {
        prop += inputs.amplified(k, 0)?;
        let e = compute_e_of_k(inputs, k)?;
        conditions.push(e < 0.5 * inputs.gap(k)?);
        e_of_k.push(e);
    }
    Ok(TrainingBound {
        rhs: tail + inputs.sigma_max_x * prop,
        e_of_k,
        conditions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationBound {
    /// Per component: `κ(X) Σ_{k'=0}^{k} ||δ_{k'}||_F Π_{j=k'+1}^{k} f_j`.
    pub component_rhs: Vec<f64>,
    /// `Σ_{k=r+1}^{p} σ_k/σ_min(X) + κ(X) Σ_{k=1}^{r} Σ_{k'=1}^{k} …`
    pub total_rhs: f64,
}

/// Parameter-space bounds for noiseless labels, against `W*` and the exact
/// components `b_k* a_k*ᵀ`.
pub fn thm41_bounds(inputs: &BoundInputs, kappa_x: f64) -> Result<GeneralizationBound, BoundError> {
    inputs.validate()?;
    check_kappa(inputs, kappa_x)?;
    let mut component_rhs = Vec::with_capacity(inputs.r);
    let mut sum = 0.0;
    for k in 1..=inputs.r {
        component_rhs.push(kappa_x * inputs.amplified(k, 0)?);
        sum += inputs.amplified(k, 1)?;
    }
    let tail: f64 = inputs.sigmas_y[inputs.r..inputs.p].iter().sum::<f64>() / inputs.sigma_min_x;
    Ok(GeneralizationBound {
        component_rhs,
        total_rhs: tail + kappa_x * sum,
    })
}

fn check_kappa(inputs: &BoundInputs, kappa_x: f64) -> Result<(), BoundError> {
    let k = inputs.kappa()?;
    if !(kappa_x.is_finite() && (kappa_x - k).abs() <= 1e-8 * k) {
        return Err(BoundError::Inconsistent(format!(
            "kappa_x = {kappa_x} disagrees with sigma_max_x / sigma_min_x = {k}"
        )));
    }
    Ok(())
}

/// Parameters of the probabilistic noise term, kept symbolic: its constant
/// is not known, so no number is attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTermParams {
    /// Noise standard deviation.
    pub epsilon: f64,
    pub n: usize,
    pub r: usize,
    pub r_star: usize,
    /// `min_{k ≤ r} T_k`.
    pub t_min: f64,
    /// Failure probability; left open.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyBound {
    /// `κ(X) (Σ_{k=r+1}^{r*} σ_k(W*) + Σ_{k=1}^{r} Σ_{k'=1}^{k} …)`
    pub deterministic_rhs: f64,
    pub noise_term: NoiseTermParams,
}

/// Deterministic part of the noisy-label bound. The noise term is returned
/// as its parameters only.
pub fn thm42_teal_bound(inputs: &BoundInputs, kappa_x: f64, epsilon: f64, n: usize) -> Result<NoisyBound, BoundError> {
    inputs.validate()?;
    check_kappa(inputs, kappa_x)?;
    let r_star = inputs.sigmas_w.len();
    let tail: f64 = inputs.sigmas_w.get(inputs.r..).map_or(0.0, |t| t.iter().sum());
    let mut sum = 0.0;
    let mut t_min = f64::INFINITY;
    for k in 1..=inputs.r {
        sum += inputs.amplified(k, 1)?;
        t_min = t_min.min(inputs.gap(k)?);
    }
    Ok(NoisyBound {
        deterministic_rhs: kappa_x * (tail + sum),
        noise_term: NoiseTermParams {
            epsilon,
            n,
            r: inputs.r,
            r_star,
            t_min,
            gamma: None,
        },
    })
}

/// Observed errors to set against the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    /// `||Y − Σ b_k a_kᵀX||_F`
    pub training_err: f64,
    /// `||W* − Σ b_k a_kᵀ||_F`
    pub recon_err: f64,
    /// `||b_k* a_k*ᵀ − b_k a_kᵀ||_F` per component.
    pub component_errs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gap_convention: String,
    pub tk_star: Vec<f64>,
    pub e_of_k: Vec<f64>,
    pub condition_ok: Vec<bool>,
    pub thm31_rhs: f64,
    pub thm41_component_rhs: Vec<f64>,
    pub thm41_total_rhs: f64,
    pub thm42_teal_rhs: f64,
    pub noise_term: NoiseTermParams,
    pub observed_training_err: f64,
    pub observed_recon_err: f64,
    pub observed_component_errs: Vec<f64>,
}

impl BoundReport {
    pub fn evaluate(inputs: &BoundInputs, observed: Observed, epsilon: f64, n: usize) -> Result<Self, BoundError> {
        inputs.validate()?;
        if observed.component_errs.len() != inputs.r {
            return Err(BoundError::Mismatch(format!(
                "{} component errors for r = {}",
                observed.component_errs.len(),
                inputs.r
            )));
        }
        let kappa = inputs.kappa()?;
        let t31 = thm31_training_bound(inputs)?;
        let t41 = thm41_bounds(inputs, kappa)?;
        let t42 = thm42_teal_bound(inputs, kappa, epsilon, n)?;
        let tk_star = (1..=inputs.r).map(|k| inputs.gap(k)).collect::<Result<_, _>>()?;
        Ok(Self {
            gap_convention: GAP_CONVENTION.into(),
            tk_star,
            e_of_k: t31.e_of_k,
            condition_ok: t31.conditions,
            thm31_rhs: t31.rhs,
            thm41_component_rhs: t41.component_rhs,
            thm41_total_rhs: t41.total_rhs,
            thm42_teal_rhs: t42.deterministic_rhs,
            noise_term: t42.noise_term,
            observed_training_err: observed.training_err,
            observed_recon_err: observed.recon_err,
            observed_component_errs: observed.component_errs,
        })
    }

    pub fn conditions_hold(&self) -> bool {
        self.condition_ok.iter().all(|&c| c)
    }

    pub fn thm31_margin(&self) -> f64 {
        self.thm31_rhs - self.observed_training_err
    }

    pub fn thm41_total_margin(&self) -> f64 {
        self.thm41_total_rhs - self.observed_recon_err
    }

    /// Smallest per-component margin.
    pub fn thm41_component_margin(&self) -> f64 {
        self.thm41_component_rhs
            .iter()
            .zip(&self.observed_component_errs)
            .map(|(rhs, obs)| rhs - obs)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-step margins of the one-step propagation inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMargins {
    pub k: usize,
    /// `||Y_k − Y_k*||_F + ||b*a*ᵀX − b̄āᵀX||_F + ||δ_k X||_F − ||Y_{k+1} − Y_{k+1}*||_F`
    pub propagation: f64,
    /// `(3σ_k/T_k + 1)||Y_k − Y_k*||_F − ||b*a*ᵀX − b̄āᵀX||_F`, present when
    /// `||Y_k − Y_k*||₂ < min_{j>k}|σ_k − σ_j|`.
    pub rank1_diff: Option<f64>,
}

fn product_times_x(design: &Design, a: &[f64], b: &[f64]) -> Result<DenseMatrix, BoundError> {
    let xa = design.x().tr_matvec(a)?;
    Ok(DenseMatrix::outer(b, &xa)?)
}

/// Checks each step of an inexact run against the exact run on the same data.
///
/// Both histories hold `Y_1, …, Y_{r+1}` as returned by the recorded solvers.
pub fn lemma2_check(
    design: &Design,
    exact: (&SolveTrace, &[DenseMatrix]),
    inexact: (&SolveTrace, &[DenseMatrix]),
    sigmas_y: &[f64],
) -> Result<Vec<StepMargins>, BoundError> {
    let (et, eh) = exact;
    let (it, ih) = inexact;
    let r = it.components.len();
    if et.components.len() != r || eh.len() != r + 1 || ih.len() != r + 1 {
        return Err(BoundError::Mismatch(format!(
            "traces must share r with r + 1 residuals (got {} / {} components, {} / {} residuals)",
            et.components.len(),
            r,
            eh.len(),
            ih.len()
        )));
    }
    if eh[0] != ih[0] {
        return Err(BoundError::Mismatch("traces were run on different labels".into()));
    }
    let mut out = Vec::with_capacity(r);
    for k in 0..r {
        let drift = ih[k].sub(&eh[k])?;
        let drift_fro = drift.frobenius_norm();
        let next_fro = ih[k + 1].sub(&eh[k + 1])?.frobenius_norm();
        let star = &et.components[k];
        let star_x = product_times_x(design, &star.a, &star.b)?;
        let bar_x = match design.best_rank1_exact(&ih[k]) {
            Ok(e) => product_times_x(design, &e.a, &e.b)?,
            Err(SolveError::ZeroTarget) => DenseMatrix::zeros(star_x.rows(), star_x.cols()),
            Err(e) => return Err(e.into()),
        };
        let comp = &it.components[k];
        let step_x = product_times_x(design, &comp.a, &comp.b)?;
        let rank1_diff_fro = star_x.sub(&bar_x)?.frobenius_norm();
        let delta_x_fro = step_x.sub(&bar_x)?.frobenius_norm();
        let propagation = drift_fro + rank1_diff_fro + delta_x_fro - next_fro;

        let rank1_diff = if k < sigmas_y.len() {
            let sk = sigmas_y[k];
            let sep = sigmas_y[k + 1..].iter().fold(sk, |m, &sj| m.min((sk - sj).abs()));
            let tk = singular_gap_tk(sigmas_y, k + 1)?;
            let spectral = if drift_fro == 0.0 { 0.0 } else { drift.spectral_norm()? };
            (spectral < sep && tk > 0.0).then(|| (3.0 * sk / tk + 1.0) * drift_fro - rank1_diff_fro)
        } else {
            None
        };
        out.push(StepMargins {
            k: k + 1,
            propagation,
            rank1_diff,
        });
    }
    Ok(out)
}
