use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Relative slack under which a permuted statistic counts as a tie with the
/// observed one; relabelings that reproduce the observed split exactly can
/// differ from it by rounding only.
const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    MeanDiff,
    VarDiff,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 2] = [StatisticKind::MeanDiff, StatisticKind::VarDiff];

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::MeanDiff => "mean_diff",
            StatisticKind::VarDiff => "var_diff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub statistic_observed: f64,
    /// `(1 + #{permuted >= observed}) / (1 + n_permutations)`.
    pub p_value: f64,
    pub n_permutations: usize,
    pub statistic_kind: StatisticKind,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn unbiased_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn statistic(kind: StatisticKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        StatisticKind::MeanDiff => (mean(a) - mean(b)).abs(),
        StatisticKind::VarDiff => (unbiased_var(a) - unbiased_var(b)).abs(),
    }
}

/// Two-sided test of `|stat(A) - stat(B)|` against random relabelings of the
/// pooled values. Group sizes are preserved by every relabeling.
pub fn permutation_test(
    group_a: &[f64],
    group_b: &[f64],
    kind: StatisticKind,
    n_permutations: usize,
    seed: u64,
) -> Result<PermutationResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::invalid("permutation test needs two nonempty groups"));
    }
    if kind == StatisticKind::VarDiff && (group_a.len() < 2 || group_b.len() < 2) {
        return Err(Error::invalid("variance comparison needs at least 2 values per group"));
    }
    if group_a.iter().chain(group_b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("permutation test values must be finite"));
    }
    let observed = statistic(kind, group_a, group_b);
    let threshold = observed - TIE_RTOL * observed.abs();
    let mut pooled: Vec<f64> = group_a.iter().chain(group_b).copied().collect();
    let split = group_a.len();
    let mut rng = rng_from_seed(seed);
    let mut exceed = 0usize;
    for _ in 0..n_permutations {
        pooled.shuffle(&mut rng);
        let (a, b) = pooled.split_at(split);
        if statistic(kind, a, b) >= threshold {
            exceed += 1;
        }
    }
    Ok(PermutationResult {
        statistic_observed: observed,
        p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
        n_permutations,
        statistic_kind: kind,
    })
}
