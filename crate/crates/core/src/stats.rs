//! Statistical helpers for audits and experiments: per-trial random streams,
//! chi-squared tests and total-variation estimates.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Independent stream for trial `trial` under master `seed`. Streams depend
/// only on `(seed, trial)`, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `f(trial, rng)` for every trial on the rayon pool and returns the
/// results in trial order.
pub fn run_trials<T, F>(seed: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i);
            f(i, &mut rng)
        })
        .collect()
}

/// Counts occurrences of each key.
pub fn histogram<K: Ord + Clone>(items: impl IntoIterator<Item = K>) -> BTreeMap<K, u64> {
    let mut out = BTreeMap::new();
    for k in items {
        *out.entry(k).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquaredResult {
    /// Passes at confidence `1 - alpha` when the p-value is at least `alpha`.
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

fn p_value(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(statistic)
}

/// Two-sample chi-squared homogeneity test. Categories whose pooled count is
/// below `min_pooled` are merged into one bin.
pub fn chi_squared_two_sample<K: Ord + Clone>(
    a: &BTreeMap<K, u64>,
    b: &BTreeMap<K, u64>,
    min_pooled: u64,
) -> ChiSquaredResult {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    let mut keys: Vec<&K> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut rare = (0.0, 0.0);
    for k in keys {
        let x = *a.get(k).unwrap_or(&0) as f64;
        let y = *b.get(k).unwrap_or(&0) as f64;
        if ((x + y) as u64) < min_pooled {
            rare.0 += x;
            rare.1 += y;
        } else {
            bins.push((x, y));
        }
    }
    if rare.0 + rare.1 > 0.0 {
        bins.push(rare);
    }
    let ka = (nb as f64 / na as f64).sqrt();
    let kb = (na as f64 / nb as f64).sqrt();
    let statistic: f64 = bins
        .iter()
        .map(|&(x, y)| (ka * x - kb * y).powi(2) / (x + y))
        .sum();
    let dof = bins.len().saturating_sub(1);
    ChiSquaredResult {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Goodness-of-fit test of observed counts against probabilities. Cells with
/// expected count below `min_expected` are merged.
pub fn chi_squared_goodness(
    observed: &[u64],
    probs: &[f64],
    min_expected: f64,
) -> ChiSquaredResult {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut rare = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e < min_expected {
            rare.0 += o as f64;
            rare.1 += e;
        } else {
            bins.push((o as f64, e));
        }
    }
    // mass not covered by the listed probabilities
    let covered: f64 = probs.iter().sum();
    rare.1 += (1.0 - covered).max(0.0) * n as f64;
    if rare.1 > 0.0 {
        bins.push(rare);
    }
    let statistic: f64 = bins.iter().map(|&(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1);
    ChiSquaredResult {
        statistic,
        dof,
        p_value: p_value(statistic, dof),
    }
}

/// Total-variation distance between two empirical distributions.
pub fn tv_distance<K: Ord>(a: &BTreeMap<K, u64>, b: &BTreeMap<K, u64>) -> f64 {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return if na == nb { 0.0 } else { 1.0 };
    }
    let mut total = 0.0;
    for (k, &x) in a {
        let y = *b.get(k).unwrap_or(&0);
        total += (x as f64 / na as f64 - y as f64 / nb as f64).abs();
    }
    for (k, &y) in b {
        if !a.contains_key(k) {
            total += y as f64 / nb as f64;
        }
    }
    total / 2.0
}
