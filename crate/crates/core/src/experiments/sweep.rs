//! Minimal sample sizes by bisection over trial batches.
//!
//! Trial `i` at every candidate size uses the same random stream, so the
//! success curve is far smoother than with fresh randomness per size.

use serde::{Deserialize, Serialize};

use rand_chacha::ChaCha8Rng;

use super::data::{threshold_sample, Family, PlantedBox};
use crate::learners::{
    learn_rectangle, learn_threshold, rectangle_positive_size, threshold_side_size,
};
use crate::stats::run_trials;
use crate::treelog::{ipp_with, is_interior, log_star_universe, IppConfig, Universe};

/// Fraction of `trials` successes of `trial(n, i, rng)`.
pub fn success_rate<F>(n: usize, trials: u64, seed: u64, trial: &F) -> f64
where
    F: Fn(usize, u64, &mut ChaCha8Rng) -> bool + Sync,
{
    let hits = run_trials(seed, trials, |i, rng| trial(n, i, rng));
    hits.iter().filter(|&&h| h).count() as f64 / trials as f64
}

/// Outcome of a bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalSize {
    /// Smallest size found to reach the target, if any size up to the cap did.
    pub minimal_n: Option<usize>,
    /// `(n, success rate)` for every size evaluated, in evaluation order.
    pub evaluations: Vec<(usize, f64)>,
}

/// Smallest `n` in `[lo, cap]` whose success rate reaches `target`, assuming
/// the rate grows with `n`. The upper end starts at `2 lo` and doubles; the
/// search stops once the bracket is within `rel_tol` of its upper end.
pub fn minimal_size<F>(
    lo: usize,
    cap: usize,
    target: f64,
    rel_tol: f64,
    trials: u64,
    seed: u64,
    trial: F,
) -> MinimalSize
where
    F: Fn(usize, u64, &mut ChaCha8Rng) -> bool + Sync,
{
    let mut evaluations = Vec::new();
    let eval = |n: usize, evaluations: &mut Vec<(usize, f64)>| {
        let r = success_rate(n, trials, seed, &trial);
        evaluations.push((n, r));
        r >= target
    };
    let lo = lo.max(1);
    if eval(lo, &mut evaluations) {
        return MinimalSize {
            minimal_n: Some(lo),
            evaluations,
        };
    }
    let mut bad = lo;
    let mut good = None;
    let mut hi = (2 * lo).min(cap);
    while good.is_none() {
        if eval(hi, &mut evaluations) {
            good = Some(hi);
        } else {
            bad = hi;
            if hi >= cap {
                return MinimalSize {
                    minimal_n: None,
                    evaluations,
                };
            }
            hi = (2 * hi).min(cap);
        }
    }
    let mut good = good.unwrap();
    while good - bad > 1 && (good - bad) as f64 > rel_tol * good as f64 {
        let mid = bad + (good - bad) / 2;
        if eval(mid, &mut evaluations) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    MinimalSize {
        minimal_n: Some(good),
        evaluations,
    }
}

/// One interior point trial: the dataset family rotates with the trial
/// index; errors count as failures.
pub fn ipp_trial(
    universe: Universe,
    cfg: IppConfig,
) -> impl Fn(usize, u64, &mut ChaCha8Rng) -> bool + Sync {
    move |n, i, rng| {
        let family = Family::ALL[(i % 4) as usize];
        let data = family.generate(universe, n, rng);
        match ipp_with(universe, data.clone(), &cfg, rng) {
            Ok(out) => is_interior(&data, out.value),
            Err(_) => false,
        }
    }
}

/// Threshold learning on uniform data with the cut at the midpoint; success
/// means error at most `xi`.
pub fn threshold_trial(
    universe: Universe,
    xi: f64,
    epsilon: f64,
    delta: f64,
) -> impl Fn(usize, u64, &mut ChaCha8Rng) -> bool + Sync {
    move |n, _, rng| {
        let size = universe.max_element() as f64 + 1.0;
        let cut = universe.max_element() / 2;
        let sample = threshold_sample(universe, cut, n, rng);
        match learn_threshold(&sample, universe, epsilon, delta, rng) {
            Ok(h) => (h.cut.abs_diff(cut) as f64) / size <= xi,
            Err(_) => false,
        }
    }
}

/// Containment and exclusion rates of one planted-box run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxScore {
    pub positives_covered: f64,
    pub negatives_excluded: f64,
}

impl BoxScore {
    pub fn passes(&self, level: f64) -> bool {
        self.positives_covered >= level && self.negatives_excluded >= level
    }
}

/// Learns a rectangle from `positives` planted positives (plus a tenth as
/// many negatives) and scores it on `fresh` new points of each label.
pub fn rectangle_trial_score(
    universe: Universe,
    dims: usize,
    positives: usize,
    fresh: usize,
    epsilon: f64,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> crate::Result<BoxScore> {
    let planted = PlantedBox::random(universe, dims, rng);
    let sample = planted.sample(positives, positives / 10, rng);
    let run = learn_rectangle(&sample, universe, epsilon, delta, rng)?;
    let covered = (0..fresh)
        .filter(|_| run.rectangle.contains(&planted.positive(rng)))
        .count();
    let excluded = (0..fresh)
        .filter(|_| !run.rectangle.contains(&planted.negative(rng)))
        .count();
    Ok(BoxScore {
        positives_covered: covered as f64 / fresh as f64,
        negatives_excluded: excluded as f64 / fresh as f64,
    })
}

pub fn rectangle_trial(
    universe: Universe,
    dims: usize,
    epsilon: f64,
    delta: f64,
) -> impl Fn(usize, u64, &mut ChaCha8Rng) -> bool + Sync {
    move |n, _, rng| {
        rectangle_trial_score(universe, dims, n, 2000, epsilon, delta, rng)
            .map(|s| s.passes(0.9))
            .unwrap_or(false)
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub bits: u32,
    pub dims: usize,
    pub log_star: u32,
    pub minimal_n: Option<usize>,
    pub trials: u64,
}

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepProblem {
    /// Interior point success vs `L`.
    Ipp,
    /// Threshold learning (`xi = 0.1`) vs `L`.
    Threshold,
    /// Rectangle learning vs dimension at fixed `L`.
    Rectangle,
}

/// Sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub problem: SweepProblem,
    /// Universe bits (ipp, threshold) or dimensions (rectangle).
    pub values: Vec<u32>,
    pub bits: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub target: f64,
    pub trials: u64,
    pub rel_tol: f64,
    pub seed: u64,
}

/// A sweep row with the bisection trace behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub row: SweepRow,
    pub evaluations: Vec<(usize, f64)>,
}

/// Runs the sweep. Each value gets its own seed stream derived from `seed`
/// and the value.
pub fn run_sweep(spec: &SweepSpec) -> crate::Result<Vec<SweepPoint>> {
    let mut rows = Vec::new();
    for &v in &spec.values {
        let seed = spec.seed ^ (u64::from(v) << 32);
        let (row, found) = match spec.problem {
            SweepProblem::Ipp => {
                let u = Universe::new(v)?;
                let cfg = IppConfig::new(spec.epsilon, spec.delta)?.permissive();
                let lo = 2 * cfg.t;
                let found = minimal_size(
                    lo,
                    1 << 26,
                    spec.target,
                    spec.rel_tol,
                    spec.trials,
                    seed,
                    ipp_trial(u, cfg),
                );
                (
                    SweepRow {
                        bits: v,
                        dims: 1,
                        log_star: log_star_universe(v),
                        minimal_n: found.minimal_n,
                        trials: spec.trials,
                    },
                    found,
                )
            }
            SweepProblem::Threshold => {
                let u = Universe::new(v)?;
                let lo = 2 * threshold_side_size(u, spec.epsilon, spec.delta)?;
                let trial = threshold_trial(u, 0.1, spec.epsilon, spec.delta);
                let found = minimal_size(
                    lo,
                    1 << 26,
                    spec.target,
                    spec.rel_tol,
                    spec.trials,
                    seed,
                    trial,
                );
                (
                    SweepRow {
                        bits: v,
                        dims: 1,
                        log_star: log_star_universe(v),
                        minimal_n: found.minimal_n,
                        trials: spec.trials,
                    },
                    found,
                )
            }
            SweepProblem::Rectangle => {
                let u = Universe::new(spec.bits)?;
                let dims = v as usize;
                let lo = rectangle_positive_size(dims, u, spec.epsilon, spec.delta)?;
                let trial = rectangle_trial(u, dims, spec.epsilon, spec.delta);
                let found = minimal_size(
                    lo,
                    64 * lo,
                    spec.target,
                    spec.rel_tol,
                    spec.trials,
                    seed,
                    trial,
                );
                (
                    SweepRow {
                        bits: spec.bits,
                        dims,
                        log_star: log_star_universe(spec.bits),
                        minimal_n: found.minimal_n,
                        trials: spec.trials,
                    },
                    found,
                )
            }
        };
        rows.push(SweepPoint {
            row,
            evaluations: found.evaluations,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_step() {
        let r = minimal_size(10, 10_000, 0.5, 0.0, 4, 1, |n, _, _| n >= 1234);
        assert_eq!(r.minimal_n, Some(1234));
        let r = minimal_size(10, 100, 0.5, 0.0, 4, 1, |n, _, _| n >= 1234);
        assert_eq!(r.minimal_n, None);
        let r = minimal_size(10, 100, 0.5, 0.0, 4, 1, |_, _, _| true);
        assert_eq!(r.minimal_n, Some(10));
    }
}
