//! Cumulative adjacency, private quasi-concave optimization, and the
//! interior-point reduction over a two-level universe chain.
//!
//! A score table is quasi-concave when it never dips and rises again. The
//! optimizer turns the positive part of `f - OPT + n` into a dataset whose
//! interior points are exactly the near-optimal solutions, and solves the
//! interior point problem on it with a solver that tolerates cumulative
//! (rather than single-element) changes.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mech::laplace;
use crate::treelog::{ipp_with, log_star_universe, IppConfig, IppOutcome, Universe};

/// Default value of the scaling constant in `eps' = eps / (C 2^{log*|X|})`.
pub const DEFAULT_SCALE_CONSTANT: f64 = 4.0;

/// Largest gap between `#{x in a : x <= y}` and `#{x in b : x <= y}` over all
/// thresholds `y`.
pub fn cumulative_distance(a: &[u64], b: &[u64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j) = (0, 0);
    let mut worst = 0;
    while i < a.len() || j < b.len() {
        let y = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&z)) => x.min(z),
            (Some(&x), None) => x,
            (None, Some(&z)) => z,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] == y {
            i += 1;
        }
        while j < b.len() && b[j] == y {
            j += 1;
        }
        worst = worst.max(i.abs_diff(j));
    }
    Ok(worst)
}

/// Index of the first rise after a strict fall, if any.
pub fn quasi_concavity_violation(scores: &[u64]) -> Option<usize> {
    let mut fallen = false;
    for (i, w) in scores.windows(2).enumerate() {
        if w[1] < w[0] {
            fallen = true;
        } else if w[1] > w[0] && fallen {
            return Some(i + 1);
        }
    }
    None
}

/// Adds `max(f'(y) - f'(y-1), 0)` copies of `y` for every index, with an
/// implicit zero before index 0. For a quasi-concave table the result has
/// exactly `max f'` elements, which must equal `n`.
pub fn build_increment_dataset(f_prime: &[u64], n: u64) -> Result<Vec<u64>> {
    if let Some(i) = quasi_concavity_violation(f_prime) {
        return Err(Error::NotQuasiConcave(i));
    }
    let top = f_prime.iter().copied().max().unwrap_or(0);
    if top != n {
        return Err(Error::WrongMaximum {
            expected: n,
            found: top,
        });
    }
    let mut out = Vec::with_capacity(n as usize);
    let mut prev = 0;
    for (y, &v) in f_prime.iter().enumerate() {
        if v > prev {
            out.extend(std::iter::repeat_n(y as u64, (v - prev) as usize));
        }
        prev = v;
    }
    Ok(out)
}

/// Solver parameters for the cumulative variant: `eps' = eps / (C 2^s)`,
/// `delta' = delta^C / 2^s` with `s = log*|X|`, and exact slice sizes.
pub fn cumulative_config(
    universe: Universe,
    epsilon: f64,
    delta: f64,
    scale_c: f64,
) -> Result<IppConfig> {
    if !(scale_c.is_finite() && scale_c >= 1.0) {
        return Err(invalid(
            "constant_c",
            format!("{scale_c} must be at least 1"),
        ));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} not in (0, 1)")));
    }
    let levels = 2f64.powi(log_star_universe(universe.bits()) as i32);
    let eps = epsilon / (scale_c * levels);
    let del = delta.powf(scale_c) / levels;
    Ok(IppConfig::new(eps, del)?.deterministic())
}

/// Interior point under cumulative adjacency.
pub fn cumulative_ipp<R: Rng + ?Sized>(
    universe: Universe,
    data: Vec<u64>,
    epsilon: f64,
    delta: f64,
    scale_c: f64,
    rng: &mut R,
) -> Result<IppOutcome> {
    let cfg = cumulative_config(universe, epsilon, delta, scale_c)?;
    ipp_with(universe, data, &cfg, rng)
}

/// An enumerable optimization instance: `scores[y]` for every solution `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcInstance {
    pub scores: Vec<u64>,
}

impl QcInstance {
    pub fn new(scores: Vec<u64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(i) = quasi_concavity_violation(&scores) {
            return Err(Error::NotQuasiConcave(i));
        }
        Ok(Self { scores })
    }

    /// Reads `y,score` rows (header optional). Missing solutions score 0.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| invalid("input", e.to_string()))?;
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| invalid("input", e.to_string()))?;
            if rec.len() != 2 {
                return Err(invalid(
                    "input",
                    format!("line {}: expected `y,score`", line + 1),
                ));
            }
            let (y, s) = (rec[0].parse::<u64>(), rec[1].parse::<u64>());
            match (y, s) {
                (Ok(y), Ok(s)) => rows.push((y, s)),
                _ if line == 0 => continue,
                _ => {
                    return Err(invalid(
                        "input",
                        format!("line {}: malformed row", line + 1),
                    ))
                }
            }
        }
        let size = rows
            .iter()
            .map(|r| r.0 + 1)
            .max()
            .ok_or(Error::EmptyDataset)?;
        if size > 1 << 26 {
            return Err(invalid(
                "input",
                format!("solution space of size {size} is too large"),
            ));
        }
        let mut scores = vec![0; size as usize];
        for (y, s) in rows {
            scores[y as usize] = s;
        }
        Self::new(scores)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn optimum(&self) -> u64 {
        self.scores.iter().copied().max().unwrap_or(0)
    }

    /// Spread between best and worst score.
    pub fn spread(&self) -> u64 {
        self.optimum() - self.scores.iter().copied().min().unwrap_or(0)
    }

    pub fn universe(&self) -> Result<Universe> {
        Universe::for_count(self.scores.len() as u64)
    }
}

/// Result of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcSolution {
    pub solution: u64,
    pub score: u64,
    /// Upper estimate of the optimum: `score + error_bound`.
    pub opt_estimate: u64,
    /// Additive error the branch taken guarantees (w.h.p.).
    pub error_bound: u64,
    /// Whether the spread gate sent the run to the interior point solver.
    pub used_ipp: bool,
    /// Dataset size handed to the solver.
    pub n: usize,
}

/// The sample size the optimizer targets: the cumulative solver's regime.
pub fn qc_target_size(universe: Universe, epsilon: f64, delta: f64, scale_c: f64) -> Result<usize> {
    Ok(cumulative_config(universe, epsilon, delta, scale_c)?.regime(universe))
}

/// Private quasi-concave optimization.
///
/// A `Lap(2/eps)` gate on the score spread returns the fixed solution 0 when
/// the spread is at most about `1.5 n`. Otherwise the scores are shifted to
/// `max(0, f - OPT + n)`, turned into a dataset of size `n`, and the
/// interior point of that dataset is returned.
pub fn qc_optimize<R: Rng + ?Sized>(
    instance: &QcInstance,
    epsilon: f64,
    delta: f64,
    scale_c: f64,
    rng: &mut R,
) -> Result<QcSolution> {
    let universe = instance.universe()?;
    let n = qc_target_size(universe, epsilon, delta, scale_c)?;
    let spread = instance.spread() as f64;
    if spread + laplace(2.0 / epsilon, rng) <= 1.5 * n as f64 {
        let score = instance.scores[0];
        let error_bound = 2 * n as u64;
        return Ok(QcSolution {
            solution: 0,
            score,
            opt_estimate: score + error_bound,
            error_bound,
            used_ipp: false,
            n,
        });
    }
    let opt = instance.optimum();
    let n64 = n as u64;
    let shifted: Vec<u64> = instance
        .scores
        .iter()
        .map(|&f| (f + n64).saturating_sub(opt))
        .collect();
    let data = build_increment_dataset(&shifted, n64)?;
    let out = cumulative_ipp(universe, data, epsilon, delta, scale_c, rng)?;
    // padded solutions past the table score 0
    let solution = out.value.min(instance.scores.len() as u64 - 1);
    let score = instance.scores[solution as usize];
    Ok(QcSolution {
        solution,
        score,
        opt_estimate: score + n64,
        error_bound: n64,
        used_ipp: true,
        n,
    })
}

/// Two-level universe chain for the reduction: the inner universe is
/// `{1..=INNER}` and outer elements are maps `{1..=INNER} -> {1..=OUTER}`
/// compared lexicographically.
pub const INNER: u64 = 10;
pub const OUTER: u64 = 40;

/// Packs an outer element (digits in `1..=OUTER`, most significant first)
/// into a `u64` whose numeric order is the lexicographic order.
pub fn encode_outer(digits: &[u64]) -> u64 {
    debug_assert_eq!(digits.len() as u64, INNER);
    digits.iter().fold(0, |acc, &d| acc * OUTER + (d - 1))
}

pub fn decode_outer(mut code: u64) -> Vec<u64> {
    let mut digits = vec![0; INNER as usize];
    for d in digits.iter_mut().rev() {
        *d = code % OUTER + 1;
        code /= OUTER;
    }
    digits
}

/// The `2n` outer elements built from inner data `x_1..x_n` and the random
/// map `z`: each `x_i` contributes the element agreeing with `z` up to `x_i`
/// followed by all 1s, and the one followed by all `OUTER`s.
pub fn reduction_dataset(data: &[u64], z: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(2 * data.len());
    for &x in data {
        for fill in [1, OUTER] {
            let digits: Vec<u64> = (1..=INNER)
                .map(|v| if v <= x { z[(v - 1) as usize] } else { fill })
                .collect();
            out.push(encode_outer(&digits));
        }
    }
    out
}

/// Largest `l` such that `y` agrees with `z` on `1..=l`; `1` when they
/// disagree immediately.
pub fn agreement_prefix(y: u64, z: &[u64]) -> u64 {
    let digits = decode_outer(y);
    let agree = digits.iter().zip(z).take_while(|(a, b)| a == b).count() as u64;
    agree.max(1)
}

/// Solves the inner interior point problem with one call to an outer
/// solver `oracle`. Only the two-level chain (`level = 2`) is supported.
pub fn hardness_reduction<R, F>(level: u32, data: &[u64], oracle: F, rng: &mut R) -> Result<u64>
where
    R: Rng + ?Sized,
    F: FnOnce(&[u64], &mut R) -> u64,
{
    if level != 2 {
        return Err(Error::UnsupportedLevel(level));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = data.iter().find(|&&x| !(1..=INNER).contains(&x)) {
        return Err(invalid("data", format!("{bad} not in [1, {INNER}]")));
    }
    let z: Vec<u64> = (0..INNER).map(|_| rng.random_range(2..OUTER)).collect();
    let outer = reduction_dataset(data, &z);
    let y = oracle(&outer, rng);
    Ok(agreement_prefix(y, &z))
}

/// Perfect outer solver: the lower median.
pub fn median_oracle<R: Rng + ?Sized>(data: &[u64], _rng: &mut R) -> u64 {
    let mut v = data.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Perfect outer solver: a uniform value between the minimum and maximum.
pub fn uniform_interior_oracle<R: Rng + ?Sized>(data: &[u64], rng: &mut R) -> u64 {
    let lo = *data.iter().min().expect("nonempty");
    let hi = *data.iter().max().expect("nonempty");
    rng.random_range(lo..=hi)
}
