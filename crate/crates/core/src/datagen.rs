//! Synthetic regression instances `Y = W*X + E`.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::rng::{rng_from, stream_seed, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("r_star must be at least 1")]
    ZeroRank,
    #[error("r_star = {r_star} exceeds min(m, d) = {limit}")]
    RankTooLarge { r_star: usize, limit: usize },
    #[error("dimensions must be positive")]
    ZeroDimension,
    #[error("cannot normalize an all-zero spectrum")]
    ZeroSpectrum,
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("target Frobenius norm must be positive and finite, got {0}")]
    BadTarget(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Shape of the planted singular spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    ExponentialDecay,
    PowerLaw,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Uniform, Profile::ExponentialDecay, Profile::PowerLaw];

    pub fn label(self) -> &'static str {
        match self {
            Profile::Uniform => "uniform",
            Profile::ExponentialDecay => "exponential_decay",
            Profile::PowerLaw => "power_law",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Profile::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| format!("unknown profile `{s}` (expected uniform, exponential_decay or power_law)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Noiseless,
    Gaussian,
    Sparse,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Noiseless => "noiseless",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Sparse => "sparse",
        })
    }
}

pub const DEFAULT_SPARSITY: f64 = 0.05;

fn default_sparsity() -> f64 {
    DEFAULT_SPARSITY
}

/// Label noise. `kappa` is a standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub kappa: f64,
    /// Fraction of corrupted entries, used by `Sparse` only.
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            kind: NoiseKind::Noiseless,
            kappa: 0.0,
            sparsity: DEFAULT_SPARSITY,
        }
    }

    pub fn gaussian(kappa: f64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            kappa,
            sparsity: DEFAULT_SPARSITY,
        }
    }

    pub fn sparse(kappa: f64) -> Self {
        Self {
            kind: NoiseKind::Sparse,
            kappa,
            sparsity: DEFAULT_SPARSITY,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(DataError::InvalidNoise(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        if self.kind == NoiseKind::Noiseless && self.kappa != 0.0 {
            return Err(DataError::InvalidNoise("noiseless requires kappa = 0".into()));
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return Err(DataError::InvalidNoise(format!("sparsity must lie in [0, 1], got {}", self.sparsity)));
        }
        Ok(())
    }

    /// Number of entries an `m × n` label matrix gets corrupted in.
    pub fn corrupted_entries(&self, m: usize, n: usize) -> usize {
        match self.kind {
            NoiseKind::Noiseless => 0,
            NoiseKind::Gaussian => m * n,
            NoiseKind::Sparse => (self.sparsity * (m * n) as f64).floor() as usize,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// `m × d`
    pub w_star: DenseMatrix,
    pub sigmas: Vec<f64>,
    pub rank: usize,
    pub profile: Profile,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `d × n`
    pub x: DenseMatrix,
    /// `m × n`
    pub y: DenseMatrix,
    pub y_star: DenseMatrix,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub corrupted_entries: usize,
}

/// Unnormalized planted spectrum for `profile`.
pub fn planted_sigmas(profile: Profile, r_star: usize) -> Result<Vec<f64>, DataError> {
    if r_star == 0 {
        return Err(DataError::ZeroRank);
    }
    Ok((1..=r_star)
        .map(|i| match profile {
            Profile::Uniform => 10.0,
            Profile::ExponentialDecay if r_star == 1 => 100.0,
            Profile::ExponentialDecay => 100.0 * 0.01f64.powf((i - 1) as f64 / (r_star - 1) as f64),
            Profile::PowerLaw => 100.0 / (i * i) as f64,
        })
        .collect())
}

pub fn normalize_frobenius(sigmas: &[f64], target_fro: f64) -> Result<Vec<f64>, DataError> {
    if !(target_fro > 0.0 && target_fro.is_finite()) {
        return Err(DataError::BadTarget(target_fro));
    }
    let norm = sigmas.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(DataError::ZeroSpectrum);
    }
    Ok(sigmas.iter().map(|s| s * (target_fro / norm)).collect())
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Mat<f64> {
    // Row-major draw order, so the stream layout does not depend on faer.
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(rng.sample::<f64, _>(StandardNormal));
    }
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// `rows × k` matrix with orthonormal columns, Haar-distributed.
fn random_orthonormal(rows: usize, k: usize, rng: &mut Rng) -> Mat<f64> {
    let g = gaussian_matrix(rows, k, rng);
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    let r = qr.thin_R();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..rows {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

pub fn generate_w_star(
    m: usize,
    d: usize,
    r_star: usize,
    profile: Profile,
    target_fro: f64,
    seed: u64,
) -> Result<GroundTruth, DataError> {
    if m == 0 || d == 0 {
        return Err(DataError::ZeroDimension);
    }
    if r_star == 0 {
        return Err(DataError::ZeroRank);
    }
    if r_star > m.min(d) {
        return Err(DataError::RankTooLarge {
            r_star,
            limit: m.min(d),
        });
    }
    let sigmas = normalize_frobenius(&planted_sigmas(profile, r_star)?, target_fro)?;
    let mut rng = rng_from(seed);
    let u = random_orthonormal(m, r_star, &mut rng);
    let v = random_orthonormal(d, r_star, &mut rng);
    let us = Mat::from_fn(m, r_star, |i, j| u[(i, j)] * sigmas[j]);
    let w = &us * v.transpose();
    Ok(GroundTruth {
        w_star: DenseMatrix::from_faer(w.as_ref())?,
        sigmas,
        rank: r_star,
        profile,
    })
}

/// Standard normal `d × n` draw, returned before and after row normalization.
pub fn sample_x_with_raw(d: usize, n: usize, seed: u64) -> Result<(DenseMatrix, DenseMatrix), DataError> {
    if d == 0 || n == 0 {
        return Err(DataError::ZeroDimension);
    }
    let mut rng = rng_from(seed);
    let raw: Vec<f64> = (0..d * n).map(|_| rng.sample(StandardNormal)).collect();
    let raw = DenseMatrix::new(d, n, raw)?;
    let mut data = raw.as_slice().to_vec();
    for row in data.chunks_mut(n) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        // A Gaussian row is zero with probability zero; guard anyway.
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok((DenseMatrix::new(d, n, data)?, raw))
}

/// Row-normalized Gaussian design matrix.
pub fn sample_x(d: usize, n: usize, seed: u64) -> Result<DenseMatrix, DataError> {
    Ok(sample_x_with_raw(d, n, seed)?.0)
}

/// Draws `X`, forms `Y* = W*X` and adds noise. `X` and the noise come from
/// separate streams of `seed`.
pub fn make_dataset(gt: &GroundTruth, n: usize, noise: NoiseSpec, seed: u64) -> Result<Dataset, DataError> {
    noise.validate()?;
    let (m, d) = gt.w_star.shape();
    let x = sample_x(d, n, stream_seed(seed, Stream::Design))?;
    let y_star = gt.w_star.matmul(&x)?;
    let mut rng = rng_from(stream_seed(seed, Stream::Noise));
    let corrupted = noise.corrupted_entries(m, n);
    let y = match noise.kind {
        NoiseKind::Noiseless => y_star.clone(),
        NoiseKind::Gaussian => {
            let data = y_star
                .as_slice()
                .iter()
                .map(|v| v + noise.kappa * rng.sample::<f64, _>(StandardNormal))
                .collect();
            DenseMatrix::new(m, n, data)?
        }
        NoiseKind::Sparse => {
            let mut data = y_star.as_slice().to_vec();
            for pos in sample_indices(&mut rng, m * n, corrupted) {
                data[pos] += noise.kappa * rng.sample::<f64, _>(StandardNormal);
            }
            DenseMatrix::new(m, n, data)?
        }
    };
    Ok(Dataset {
        x,
        y,
        y_star,
        noise,
        seed,
        corrupted_entries: corrupted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trips_through_label() {
        for p in Profile::ALL {
            assert_eq!(p.label().parse::<Profile>().unwrap(), p);
        }
        assert!("flat".parse::<Profile>().is_err());
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseSpec::gaussian(-1.0).validate().is_err());
        assert!(NoiseSpec {
            kind: NoiseKind::Noiseless,
            kappa: 1.0,
            sparsity: 0.05
        }
        .validate()
        .is_err());
        assert!(NoiseSpec::sparse(10.0).validate().is_ok());
        assert_eq!(NoiseSpec::sparse(1.0).corrupted_entries(50, 200), 500);
    }

    #[test]
    fn rank_limit() {
        assert!(matches!(
            generate_w_star(3, 5, 4, Profile::Uniform, 10.0, 0),
            Err(DataError::RankTooLarge { r_star: 4, limit: 3 })
        ));
        assert!(matches!(planted_sigmas(Profile::PowerLaw, 0), Err(DataError::ZeroRank)));
    }
}
