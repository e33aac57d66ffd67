//! One-dimensional Gaussian mixtures fitted by expectation-maximization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ClusterError;

/// Component weights must sum to one within this tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

/// Weighted sum of normal densities over a scalar intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GmmComponent>", into = "Vec<GmmComponent>")]
pub struct GmmModel {
    components: Vec<GmmComponent>,
}

impl TryFrom<Vec<GmmComponent>> for GmmModel {
    type Error = ClusterError;

    fn try_from(components: Vec<GmmComponent>) -> Result<Self, Self::Error> {
        GmmModel::new(components)
    }
}

impl From<GmmModel> for Vec<GmmComponent> {
    fn from(model: GmmModel) -> Self {
        model.components
    }
}

impl GmmModel {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self, ClusterError> {
        if components.is_empty() {
            return Err(ClusterError::InvalidModel("a mixture needs at least one component".into()));
        }
        for (k, c) in components.iter().enumerate() {
            if !(c.mean.is_finite() && c.variance.is_finite() && c.variance > 0.0) {
                return Err(ClusterError::InvalidModel(format!(
                    "component {k} has mean {} and variance {}",
                    c.mean, c.variance
                )));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(ClusterError::InvalidModel(format!("component {k} has weight {}", c.weight)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(ClusterError::InvalidModel(format!("weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// log P(x) under the mixture.
    pub fn log_density(&self, x: f64) -> f64 {
        let scorer = Scorer::new(self);
        let mut scores = vec![0.0; self.k()];
        scorer.log_joint(x, &mut scores);
        log_sum_exp(&scores)
    }
}

/// Precomputed per-component terms of log(π_k N(x | μ_k, σ²_k)).
struct Scorer {
    offset: Vec<f64>,
    mean: Vec<f64>,
    inv_two_var: Vec<f64>,
}

impl Scorer {
    fn new(model: &GmmModel) -> Self {
        let c = &model.components;
        Self {
            offset: c
                .iter()
                .map(|c| c.weight.ln() - 0.5 * (2.0 * PI * c.variance).ln())
                .collect(),
            mean: c.iter().map(|c| c.mean).collect(),
            inv_two_var: c.iter().map(|c| 0.5 / c.variance).collect(),
        }
    }

    #[inline]
    fn log_joint(&self, x: f64, out: &mut [f64]) {
        for k in 0..out.len() {
            let d = x - self.mean[k];
            out[k] = self.offset[k] - d * d * self.inv_two_var[k];
        }
    }

    /// Index of the largest posterior; ties go to the lowest index.
    #[inline]
    fn argmax(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..self.mean.len() {
            let d = x - self.mean[k];
            let s = self.offset[k] - d * d * self.inv_two_var[k];
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        best
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|&s| (s - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    /// Stop once the relative change in log-likelihood falls below this.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Lower bound on every component variance.
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 100,
            variance_floor: 1e-4,
        }
    }
}

/// Result of an EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Log-likelihood of the initial model followed by one entry per iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl EmFit {
    pub fn iterations(&self) -> usize {
        self.log_likelihood.len() - 1
    }
}

/// Fits a `k`-component mixture to `samples`.
///
/// Initialization is deterministic: means at the evenly spaced sample
/// quantiles (k + 0.5) / K, variances at the sample variance divided by K,
/// uniform weights. Repeated sample values are collapsed into weighted points
/// first, which leaves every EM update unchanged.
pub fn fit_gmm_1d(samples: &[f64], k: usize, options: &EmOptions) -> Result<EmFit, ClusterError> {
    if samples.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::InvalidModel("k must be >= 1".into()));
    }
    if samples.len() < k {
        return Err(ClusterError::InsufficientData {
            samples: samples.len(),
            k,
        });
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(ClusterError::InvalidModel(format!("non-finite sample {x}")));
    }
    check_options(options)?;

    let (values, counts) = collapse(samples);
    Ok(run_em(&values, &counts, k, options))
}

fn check_options(options: &EmOptions) -> Result<(), ClusterError> {
    if !(options.tolerance > 0.0) || options.max_iters == 0 || !(options.variance_floor > 0.0) {
        return Err(ClusterError::InvalidConfig(format!(
            "EM options need tolerance > 0, max_iters >= 1 and variance_floor > 0, got {options:?}"
        )));
    }
    Ok(())
}

/// Sorted distinct values with their multiplicities.
fn collapse(samples: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let mut values = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for x in sorted {
        // -0.0 and 0.0 are the same sample.
        let x = if x == 0.0 { 0.0 } else { x };
        match values.last() {
            Some(&last) if last == x => *counts.last_mut().unwrap() += 1.0,
            _ => {
                values.push(x);
                counts.push(1.0);
            }
        }
    }
    (values, counts)
}

fn run_em(values: &[f64], counts: &[f64], k: usize, options: &EmOptions) -> EmFit {
    let total: f64 = counts.iter().sum();
    let mean = values.iter().zip(counts).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(counts)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / total;

    let mut components: Vec<GmmComponent> = (0..k)
        .map(|j| GmmComponent {
            mean: weighted_quantile(values, counts, total, (j as f64 + 0.5) / k as f64),
            variance: (var / k as f64).max(options.variance_floor),
            weight: 1.0 / k as f64,
        })
        .collect();

    let n = values.len();
    let mut resp = vec![0.0; n * k];
    let mut ll = e_step(values, counts, &components, &mut resp);
    let mut trace = vec![ll];
    let mut converged = false;

    for _ in 0..options.max_iters {
        m_step(values, counts, total, &resp, &mut components, options.variance_floor);
        let next = e_step(values, counts, &components, &mut resp);
        trace.push(next);
        let change = (next - ll).abs();
        ll = next;
        if change <= options.tolerance * ll.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    normalize_weights(&mut components);
    EmFit {
        model: GmmModel { components },
        log_likelihood: trace,
        converged,
    }
}

/// Nearest-rank quantile over weighted sorted values.
fn weighted_quantile(values: &[f64], counts: &[f64], total: f64, q: f64) -> f64 {
    let rank = (q * (total - 1.0)).floor();
    let mut seen = 0.0;
    for (x, w) in values.iter().zip(counts) {
        seen += w;
        if seen > rank {
            return *x;
        }
    }
    *values.last().unwrap()
}

/// Fills responsibilities (row-major, one row per value) and returns the
/// weighted log-likelihood.
fn e_step(values: &[f64], counts: &[f64], components: &[GmmComponent], resp: &mut [f64]) -> f64 {
    let k = components.len();
    let scorer = Scorer::new(&GmmModel {
        components: components.to_vec(),
    });
    let mut ll = 0.0;
    for (i, (&x, &w)) in values.iter().zip(counts).enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        scorer.log_joint(x, row);
        let lse = log_sum_exp(row);
        ll += w * lse;
        for r in row.iter_mut() {
            *r = (*r - lse).exp();
        }
    }
    ll
}

fn m_step(
    values: &[f64],
    counts: &[f64],
    total: f64,
    resp: &[f64],
    components: &mut [GmmComponent],
    variance_floor: f64,
) {
    let k = components.len();
    for (j, comp) in components.iter_mut().enumerate() {
        let mut nk = 0.0;
        let mut sx = 0.0;
        for (i, (&x, &w)) in values.iter().zip(counts).enumerate() {
            let r = w * resp[i * k + j];
            nk += r;
            sx += r * x;
        }
        if nk <= 0.0 {
            // Component lost all support; it keeps its place with zero weight.
            comp.weight = 0.0;
            continue;
        }
        let mu = sx / nk;
        let mut sxx = 0.0;
        for (i, (&x, &w)) in values.iter().zip(counts).enumerate() {
            let d = x - mu;
            sxx += w * resp[i * k + j] * d * d;
        }
        comp.mean = mu;
        comp.variance = (sxx / nk).max(variance_floor);
        comp.weight = nk / total;
    }
    normalize_weights(components);
}

fn normalize_weights(components: &mut [GmmComponent]) {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
}

/// Hard assignment of each sample to its most responsible component.
pub fn assign_clusters(samples: &[f64], model: &GmmModel) -> Vec<usize> {
    let scorer = Scorer::new(model);
    samples.iter().map(|&x| scorer.argmax(x)).collect()
}

/// Reusable single-sample assigner for hot loops.
pub(crate) struct Assigner(Scorer);

impl Assigner {
    pub(crate) fn new(model: &GmmModel) -> Self {
        Self(Scorer::new(model))
    }

    #[inline]
    pub(crate) fn assign(&self, x: f64) -> usize {
        self.0.argmax(x)
    }
}
