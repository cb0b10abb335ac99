//! Experiment configuration.
//!
//! Files ending in `.json` are parsed as JSON, everything else as TOML. Both
//! map onto the same [`ExperimentConfig`]; unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqrank::datagen::{NoiseKind, NoiseSpec, Profile};
use seqrank::solver::{AllocationStrategy, GdConfig};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Alloc,
    Profile,
    Noise,
    Threshold,
    Bounds,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Alloc => "alloc",
            ExperimentKind::Profile => "profile",
            ExperimentKind::Noise => "noise",
            ExperimentKind::Threshold => "threshold",
            ExperimentKind::Bounds => "bounds",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            ExperimentKind::Alloc,
            ExperimentKind::Profile,
            ExperimentKind::Noise,
            ExperimentKind::Threshold,
            ExperimentKind::Bounds,
        ]
        .into_iter()
        .find(|k| k.label() == s)
        .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

fn d_m() -> usize {
    500
}
fn d_d() -> usize {
    1000
}
fn d_r_star() -> usize {
    20
}
fn d_profile() -> Profile {
    Profile::PowerLaw
}
fn d_total_budget() -> usize {
    10_000
}
fn d_strategies() -> Vec<AllocationStrategy> {
    vec![
        AllocationStrategy::MoreFirst,
        AllocationStrategy::Equal,
        AllocationStrategy::LessFirst,
    ]
}
fn d_trials() -> usize {
    5
}
fn d_thresholds() -> Vec<f64> {
    vec![2.5, 2.0, 1.5, 1.0]
}
fn d_output_dir() -> String {
    "out".into()
}
fn d_target_fro() -> f64 {
    100.0
}
fn d_gaussian_kappas() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.1]
}
fn d_sparse_kappas() -> Vec<f64> {
    vec![1.0, 10.0]
}
fn d_profiles() -> Vec<Profile> {
    Profile::ALL.to_vec()
}
fn d_budget_cap() -> usize {
    10_000
}
fn d_workers() -> usize {
    1
}

/// One experiment run. Every field has a default; the CLI subcommand
/// overrides `experiment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentKind,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_d")]
    pub d: usize,
    /// Sample count; `2·d` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "d_r_star")]
    pub r_star: usize,
    /// Fitted rank; `r_star` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default = "d_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "d_total_budget")]
    pub total_budget: usize,
    /// Compared side by side in `alloc` and `threshold`; the other
    /// experiments use the first entry.
    #[serde(default = "d_strategies")]
    pub strategies: Vec<AllocationStrategy>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "d_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub gd: GdConfig,
    #[serde(default = "d_output_dir")]
    pub output_dir: String,
    #[serde(default = "d_target_fro")]
    pub target_fro: f64,
    #[serde(default = "d_gaussian_kappas")]
    pub gaussian_kappas: Vec<f64>,
    #[serde(default = "d_sparse_kappas")]
    pub sparse_kappas: Vec<f64>,
    #[serde(default = "d_profiles")]
    pub profiles: Vec<Profile>,
    /// Largest total budget tried by `threshold`.
    #[serde(default = "d_budget_cap")]
    pub budget_cap: usize,
    /// Parallel trial slots. Output does not depend on it.
    #[serde(default = "d_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    /// Defaults for `kind`.
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            experiment: kind,
            m: d_m(),
            d: d_d(),
            n: None,
            r_star: d_r_star(),
            r: None,
            profile: d_profile(),
            noise: NoiseSpec::default(),
            total_budget: d_total_budget(),
            strategies: d_strategies(),
            trials: d_trials(),
            base_seed: 0,
            thresholds: d_thresholds(),
            gd: GdConfig::default(),
            output_dir: d_output_dir(),
            target_fro: d_target_fro(),
            gaussian_kappas: d_gaussian_kappas(),
            sparse_kappas: d_sparse_kappas(),
            profiles: d_profiles(),
            budget_cap: d_budget_cap(),
            workers: d_workers(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses `text`, choosing the format from `path`'s extension.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |message: String| HarnessError::ConfigParse {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(text).map_err(|e| err(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| err(e.to_string()))
        }
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(2 * self.d)
    }

    pub fn r(&self) -> usize {
        self.r.unwrap_or(self.r_star)
    }

    /// Fills `n` and `r` so the serialized form records them.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.n = Some(self.n());
        c.r = Some(self.r());
        c
    }

    pub fn primary_strategy(&self) -> AllocationStrategy {
        self.strategies.first().copied().unwrap_or(AllocationStrategy::Equal)
    }

    pub fn output_path(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.m == 0 || self.d == 0 || self.n() == 0 || self.r_star == 0 || self.r() == 0 {
            return bad("dimensions and ranks must be positive".into());
        }
        if self.r() > self.m.min(self.d) || self.r_star > self.m.min(self.d) {
            return bad(format!(
                "r = {} and r_star = {} must not exceed min(m, d) = {}",
                self.r(),
                self.r_star,
                self.m.min(self.d)
            ));
        }
        if self.n() < self.d {
            return bad(format!("n = {} must be at least d = {} for a full-rank design", self.n(), self.d));
        }
        if !(self.target_fro > 0.0 && self.target_fro.is_finite()) {
            return bad(format!("target_fro must be positive, got {}", self.target_fro));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.noise.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.gd.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.strategies.is_empty() {
            return bad("strategies must not be empty".into());
        }
        if self.strategies.contains(&AllocationStrategy::Explicit) {
            return bad("experiments take equal, more_first or less_first strategies".into());
        }
        if self.total_budget < self.r() {
            return bad(format!(
                "total_budget = {} is smaller than r = {}",
                self.total_budget,
                self.r()
            ));
        }
        match self.experiment {
            ExperimentKind::Threshold => {
                if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return bad("thresholds must be a non-empty list of positive numbers".into());
                }
                if self.budget_cap < self.r() {
                    return bad(format!("budget_cap = {} is smaller than r = {}", self.budget_cap, self.r()));
                }
            }
            ExperimentKind::Noise => {
                if self.gaussian_kappas.is_empty() && self.sparse_kappas.is_empty() {
                    return bad("noise sweep needs at least one kappa".into());
                }
                for k in self.gaussian_kappas.iter().chain(&self.sparse_kappas) {
                    if !(*k >= 0.0 && k.is_finite()) {
                        return bad(format!("noise kappa must be finite and >= 0, got {k}"));
                    }
                }
            }
            ExperimentKind::Profile if self.profiles.is_empty() => {
                return bad("profiles must not be empty".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 of the resolved config, first 16 hex digits. `output_dir`
    /// and `workers` do not enter the hash since they cannot change results.
    pub fn hash(&self) -> String {
        let mut c = self.resolved();
        c.output_dir = String::new();
        c.workers = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Noise specs swept by the `noise` experiment, Gaussian first.
    pub fn noise_sweep(&self) -> Vec<NoiseSpec> {
        let sparsity = if self.noise.kind == NoiseKind::Sparse {
            self.noise.sparsity
        } else {
            seqrank::datagen::DEFAULT_SPARSITY
        };
        self.gaussian_kappas
            .iter()
            .map(|&k| NoiseSpec::gaussian(k))
            .chain(self.sparse_kappas.iter().map(|&k| NoiseSpec {
                sparsity,
                ..NoiseSpec::sparse(k)
            }))
            .collect()
    }
}
