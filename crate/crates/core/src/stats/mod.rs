//! Rank-based significance tests: Wilcoxon signed-rank, Bonferroni
//! correction and the Friedman test.

mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{chi_square_sf, erfc, gamma_q, ln_gamma, normal_sf};

/// Largest number of non-zero differences for which the exact Wilcoxon null
/// distribution is used (when there are no tied magnitudes).
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
    ChiSquareApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: TestMethod,
}

/// Midranks (1-based) of `values`, plus the tie-group sizes.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped. The statistic is min(W+, W-).
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(StatsError::InvalidInput(format!(
            "paired samples need equal non-zero lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::InvalidInput("non-finite score".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|&d| d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            method: TestMethod::Exact,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    if n <= WILCOXON_EXACT_MAX_N && ties.is_empty() {
        let p = (2.0 * exact_lower_tail(n, w as usize)).min(1.0);
        return Ok(TestResult {
            statistic: w,
            p_value: p,
            n_effective: n,
            method: TestMethod::Exact,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((mean - w).abs() - 0.5).max(0.0) / var.sqrt();
        (2.0 * normal_sf(z)).min(1.0)
    };
    Ok(TestResult {
        statistic: w,
        p_value: p,
        n_effective: n,
        method: TestMethod::NormalApprox,
    })
}

/// P(W+ <= w) under the null for ranks 1..=n.
fn exact_lower_tail(n: usize, w: usize) -> f64 {
    let max = n * (n + 1) / 2;
    // counts[s] = number of subsets of {1..n} summing to s; fits in u64 for n <= 25.
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for r in 1..=n {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let hits: u64 = counts[..=w.min(max)].iter().sum();
    hits as f64 / (1u64 << n) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonferroniDecision {
    pub adjusted_p: f64,
    pub significant: bool,
}

/// Adjusted p = min(1, m·p); significant iff adjusted p < alpha.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Vec<BonferroniDecision> {
    let m = p_values.len() as f64;
    p_values
        .iter()
        .map(|&p| {
            let adjusted_p = (m * p).min(1.0);
            BonferroniDecision {
                adjusted_p,
                significant: adjusted_p < alpha,
            }
        })
        .collect()
}

/// Friedman test over `scores[subject][treatment]`, with tie correction.
pub fn friedman(scores: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    let n = scores.len();
    if n < 2 {
        return Err(StatsError::InvalidInput(format!("need at least 2 subjects, got {n}")));
    }
    let k = scores[0].len();
    if k < 2 {
        return Err(StatsError::InvalidInput(format!("need at least 2 treatments, got {k}")));
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_sum = 0.0;
    for (i, row) in scores.iter().enumerate() {
        if row.len() != k {
            return Err(StatsError::InvalidInput(format!(
                "subject {i} has {} scores, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::InvalidInput(format!("subject {i} has a missing score")));
        }
        let (ranks, ties) = midranks(row);
        for (s, r) in rank_sums.iter_mut().zip(ranks) {
            *s += r;
        }
        tie_sum += ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * rank_sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_sum / (nf * kf * (kf * kf - 1.0));
    let (statistic, p_value) = if correction <= 0.0 {
        // Every row fully tied.
        (0.0, 1.0)
    } else {
        let chi2 = (raw / correction).max(0.0);
        (chi2, chi_square_sf(chi2, kf - 1.0).clamp(0.0, 1.0))
    };
    Ok(TestResult {
        statistic,
        p_value,
        n_effective: n,
        method: TestMethod::ChiSquareApprox,
    })
}
