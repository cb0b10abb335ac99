//! Gradient descent on the factored rank-1 objective `½||Y_k − b aᵀX||_F²`.

use std::fmt;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Design, SolveError};
use crate::linalg::{axpy, dot, norm2, DenseMatrix};
use crate::rng::rng_from;

/// Learning rate: fixed, or derived from the problem at the first iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StepSize::Auto => s.serialize_str("auto"),
            StepSize::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) if s == "auto" => Ok(StepSize::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("step size must be `auto` or a number, got `{s}`"))),
            Raw::Num(v) => Ok(StepSize::Fixed(v)),
            Raw::Int(v) => Ok(StepSize::Fixed(v as f64)),
        }
    }
}

fn default_init_scale() -> f64 {
    1e-2
}

fn default_max_iters() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdConfig {
    #[serde(default)]
    pub step_a: StepSize,
    #[serde(default)]
    pub step_b: StepSize,
    /// Standard deviation of the i.i.d. Gaussian initialization.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    /// Iteration cap. Allocation plans override it per component.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Early stop once both gradient norms are at or below this value.
    #[serde(default)]
    pub grad_tol: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step_a: StepSize::Auto,
            step_b: StepSize::Auto,
            init_scale: default_init_scale(),
            max_iters: default_max_iters(),
            grad_tol: 0.0,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        for (name, s) in [("step_a", self.step_a), ("step_b", self.step_b)] {
            if let StepSize::Fixed(v) = s {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(SolveError::InvalidConfig(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(SolveError::InvalidConfig(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(SolveError::InvalidConfig(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub iters_used: usize,
    pub step_a: f64,
    pub step_b: f64,
}

/// Iterates are rejected once their norm exceeds this multiple of the
/// reference scale.
const DIVERGENCE_FACTOR: f64 = 1e8;

/// Runs the coupled updates
///
/// ```text
/// a ← a − η_a X (b aᵀX − Y_k)ᵀ b
/// b ← b − η_b (b aᵀX − Y_k) Xᵀ a
/// ```
///
/// through the sufficient statistics `G = XXᵀ` and `C = XY_kᵀ`, which turn
/// the gradients into `G a ||b||² − C b` and `b (aᵀGa) − Cᵀa`. Both updates
/// read the same iterate.
///
/// `sigma_top` is `σ₁(Y_k)`, used for the automatic step and the divergence
/// scale.
pub(super) fn run(
    design: &Design,
    yk: &DenseMatrix,
    config: &GdConfig,
    max_iters: usize,
    seed: u64,
    sigma_top: f64,
) -> Result<GdOutcome, SolveError> {
    config.validate()?;
    let (d, n) = design.x().shape();
    let m = yk.rows();
    if yk.cols() != n {
        return Err(SolveError::Shape(format!("Y_k has {} columns but X has {n}", yk.cols())));
    }

    let mut rng = rng_from(seed);
    let mut a: Vec<f64> = (0..d).map(|_| config.init_scale * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut b: Vec<f64> = (0..m).map(|_| config.init_scale * rng.sample::<f64, _>(StandardNormal)).collect();

    // Target scale: ||b̄ āᵀ||₂ is at most σ₁(Y_k)/σ_min(X) for the exact step.
    let target_scale = sigma_top / design.sigma_min();
    let init_product = norm2(&a) * norm2(&b);
    let mut scale = init_product.max(target_scale);
    if scale == 0.0 {
        scale = 1.0;
    }
    let auto = 1.0 / (2.0 * design.sigma_max().powi(2) * scale);
    let step_a = match config.step_a {
        StepSize::Auto => auto,
        StepSize::Fixed(v) => v,
    };
    let step_b = match config.step_b {
        StepSize::Auto => auto,
        StepSize::Fixed(v) => v,
    };
    if max_iters == 0 {
        return Ok(GdOutcome {
            a,
            b,
            iters_used: 0,
            step_a,
            step_b,
        });
    }

    let limit = DIVERGENCE_FACTOR * (norm2(&a).hypot(norm2(&b))).max(target_scale.sqrt());
    let gram = design.gram();
    let c = design.x().matmul(&yk.transpose())?;

    let mut iters_used = 0;
    for t in 0..max_iters {
        let ga = gram.matvec(&a)?;
        let bb = dot(&b, &b);
        let aga = dot(&a, &ga);
        let mut grad_a = c.matvec(&b)?;
        for (g, gai) in grad_a.iter_mut().zip(&ga) {
            *g = bb * gai - *g;
        }
        let mut grad_b = c.tr_matvec(&a)?;
        for (g, bi) in grad_b.iter_mut().zip(&b) {
            *g = aga * bi - *g;
        }
        if norm2(&grad_a) <= config.grad_tol && norm2(&grad_b) <= config.grad_tol {
            break;
        }
        axpy(-step_a, &grad_a, &mut a);
        axpy(-step_b, &grad_b, &mut b);
        iters_used = t + 1;
        let size = norm2(&a).hypot(norm2(&b));
        if !size.is_finite() || size > limit {
            return Err(SolveError::Diverged {
                step_a,
                step_b,
                iteration: iters_used,
            });
        }
    }
    Ok(GdOutcome {
        a,
        b,
        iters_used,
        step_a,
        step_b,
    })
}
