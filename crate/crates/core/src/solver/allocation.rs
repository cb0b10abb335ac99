//! Splitting a total iteration budget across sequential components.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationStrategy {
    Equal,
    MoreFirst,
    LessFirst,
    Explicit,
}

impl AllocationStrategy {
    pub fn label(self) -> &'static str {
        match self {
            AllocationStrategy::Equal => "equal",
            AllocationStrategy::MoreFirst => "more_first",
            AllocationStrategy::LessFirst => "less_first",
            AllocationStrategy::Explicit => "explicit",
        }
    }
}

impl fmt::Display for AllocationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AllocationStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            AllocationStrategy::Equal,
            AllocationStrategy::MoreFirst,
            AllocationStrategy::LessFirst,
            AllocationStrategy::Explicit,
        ]
        .into_iter()
        .find(|a| a.label() == s)
        .ok_or_else(|| format!("unknown strategy `{s}` (expected equal, more_first, less_first or explicit)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub strategy: AllocationStrategy,
    pub budgets: Vec<usize>,
}

impl AllocationPlan {
    /// Caller-supplied budgets. Zero entries are allowed here, which gives a
    /// no-work run useful as a baseline.
    pub fn explicit(budgets: Vec<usize>) -> Result<Self, SolveError> {
        if budgets.is_empty() {
            return Err(SolveError::InvalidAllocation("explicit plan needs at least one budget".into()));
        }
        Ok(Self {
            strategy: AllocationStrategy::Explicit,
            budgets,
        })
    }

    pub fn total(&self) -> usize {
        self.budgets.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.budgets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.budgets.is_empty()
    }
}

/// Linear ramp `T·(r−k+1)/Σj`, rounded, floored at one iteration, then
/// nudged by ±1 on the earliest components until the sum is exactly `T`.
fn ramp(r: usize, total: usize) -> Vec<usize> {
    let denom = (r * (r + 1) / 2) as f64;
    let mut budgets: Vec<usize> = (1..=r)
        .map(|k| ((total as f64 * (r - k + 1) as f64 / denom).round() as usize).max(1))
        .collect();
    let mut sum: usize = budgets.iter().sum();
    let mut k = 0;
    while sum < total {
        budgets[k % r] += 1;
        sum += 1;
        k += 1;
    }
    k = 0;
    while sum > total {
        // Terminates: total >= r, so some budget exceeds one while sum > total.
        if budgets[k % r] > 1 {
            budgets[k % r] -= 1;
            sum -= 1;
        }
        k += 1;
    }
    budgets
}

pub fn make_allocation(strategy: AllocationStrategy, r: usize, total: usize) -> Result<AllocationPlan, SolveError> {
    if r == 0 {
        return Err(SolveError::InvalidAllocation("rank r must be at least 1".into()));
    }
    if total < r {
        return Err(SolveError::InvalidAllocation(format!(
            "total budget {total} is smaller than the number of components {r}"
        )));
    }
    let budgets = match strategy {
        AllocationStrategy::Equal => {
            let (q, rem) = (total / r, total % r);
            (0..r).map(|k| q + usize::from(k < rem)).collect()
        }
        AllocationStrategy::MoreFirst => ramp(r, total),
        AllocationStrategy::LessFirst => {
            let mut b = ramp(r, total);
            b.reverse();
            b
        }
        AllocationStrategy::Explicit => {
            return Err(SolveError::InvalidAllocation(
                "explicit plans carry their own budgets; use AllocationPlan::explicit".into(),
            ))
        }
    };
    Ok(AllocationPlan { strategy, budgets })
}
