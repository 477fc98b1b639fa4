//! Standard DP building blocks: discrete and continuous noise, the exponential
//! and choosing mechanisms, and AboveThreshold.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Per-step privacy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
        }
        if !(delta.is_finite() && (0.0..1.0).contains(&delta)) {
            return Err(invalid("delta", format!("{delta} not in [0, 1)")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")))
    }
}

/// Samples `Geom(1 - e^{-epsilon})`, i.e. `k` with probability
/// `e^{-k epsilon} (1 - e^{-epsilon})`.
///
/// Implemented as `floor(Exp(1) / epsilon)`, which has exactly that law.
pub fn sample_geometric<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> Result<u64> {
    check_epsilon(epsilon)?;
    Ok(geometric_with_rate(epsilon, rng))
}

/// Samples `Geom(p)` for success probability `p` in `(0, 1]`.
pub fn sample_geometric_p<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    if !(p.is_finite() && p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("{p} not in (0, 1]")));
    }
    if p == 1.0 {
        return Ok(0);
    }
    Ok(geometric_with_rate(-(-p).ln_1p(), rng))
}

pub(crate) fn geometric_with_rate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    let e: f64 = Exp1.sample(rng);
    // `as` saturates, which only matters for astronomically small rates.
    (e / rate).floor() as u64
}

/// Exact pmf of `Geom(1 - e^{-epsilon})` at `k`.
pub fn geometric_pmf(epsilon: f64, k: u64) -> f64 {
    (-(k as f64) * epsilon).exp() * (-(-epsilon).exp_m1())
}

/// Zero-mean Laplace noise with the given scale.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid("scale", format!("{scale} must be positive")));
    }
    Ok(laplace(scale, rng))
}

pub(crate) fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    if rng.random::<bool>() {
        scale * e
    } else {
        -scale * e
    }
}

/// A score function over candidates.
pub trait QualityFunction<D: ?Sized, C> {
    fn evaluate(&self, data: &D, candidate: &C) -> f64;

    fn sensitivity(&self) -> f64 {
        1.0
    }

    /// `Some(k)` when adding one element raises at most `k` scores by at most 1
    /// each, and the empty dataset scores every candidate 0.
    fn bound_k(&self) -> Option<usize> {
        None
    }
}

/// Extra structure the choosing mechanism needs from a k-bounded quality
/// function: the candidates a dataset can give a nonzero score, and a
/// data-independent default.
pub trait BoundedQuality<D: ?Sized, C>: QualityFunction<D, C> {
    fn touched(&self, data: &D) -> Vec<C>;
    fn fallback(&self) -> C;
}

/// Samples an index with probability proportional to
/// `exp(epsilon * score / (2 * sensitivity))`.
pub fn exponential_mechanism_scores<R: Rng + ?Sized>(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("epsilon", format!("{epsilon} must be positive")));
    }
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(invalid(
            "sensitivity",
            format!("{sensitivity} must be positive"),
        ));
    }
    if scores.len() == 1 {
        return Ok(0);
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let factor = epsilon / (2.0 * sensitivity);
    let weights: Vec<f64> = scores.iter().map(|s| ((s - top) * factor).exp()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| invalid("scores", e.to_string()))?;
    Ok(dist.sample(rng))
}

/// The exponential mechanism over an explicit candidate list.
pub fn exponential_mechanism<D, C, Q, R>(
    candidates: &[C],
    quality: &Q,
    data: &D,
    epsilon: f64,
    rng: &mut R,
) -> Result<C>
where
    D: ?Sized,
    C: Clone,
    Q: QualityFunction<D, C> + ?Sized,
    R: Rng + ?Sized,
{
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| quality.evaluate(data, c))
        .collect();
    let idx = exponential_mechanism_scores(&scores, epsilon, quality.sensitivity(), rng)?;
    Ok(candidates[idx].clone())
}

/// The additive error `(16/eps) ln(4kn/(beta eps delta))` of the choosing
/// mechanism.
pub fn choosing_error_bound(k: usize, n: usize, epsilon: f64, delta: f64, beta: f64) -> f64 {
    let n = n.max(1) as f64;
    16.0 / epsilon * (4.0 * k as f64 * n / (beta * epsilon * delta)).ln()
}

/// The choosing mechanism for k-bounded quality functions.
///
/// A Laplace(4/eps) gate compares the best score with half the additive error
/// bound; when it passes, the exponential mechanism with `eps/2` runs over the
/// candidates the data touches. Otherwise the data-independent fallback is
/// returned.
#[allow(clippy::too_many_arguments)]
pub fn choosing_mechanism<D, C, Q, R>(
    quality: &Q,
    data: &D,
    n: usize,
    epsilon: f64,
    delta: f64,
    beta: f64,
    rng: &mut R,
) -> Result<C>
where
    D: ?Sized,
    C: Clone,
    Q: BoundedQuality<D, C> + ?Sized,
    R: Rng + ?Sized,
{
    let k = quality.bound_k().ok_or(Error::NotBounded)?;
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 2.0) {
        return Err(invalid("epsilon", format!("{epsilon} not in (0, 2)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} not in (0, 1)")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("{beta} not in (0, 1)")));
    }
    let touched = quality.touched(data);
    let scores: Vec<f64> = touched.iter().map(|c| quality.evaluate(data, c)).collect();
    let opt = scores.iter().copied().fold(0.0, f64::max);
    let gate = choosing_error_bound(k, n, epsilon, delta, beta) / 2.0;
    if opt + laplace(4.0 / epsilon, rng) < gate {
        return Ok(quality.fallback());
    }
    let live: Vec<usize> = (0..touched.len()).filter(|&i| scores[i] > 0.0).collect();
    if live.is_empty() {
        return Ok(quality.fallback());
    }
    let live_scores: Vec<f64> = live.iter().map(|&i| scores[i]).collect();
    let pick = exponential_mechanism_scores(&live_scores, epsilon / 2.0, 1.0, rng)?;
    Ok(touched[live[pick]].clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvtAnswer {
    Top,
    Bottom,
}

/// AboveThreshold: answers threshold queries until the first noisy exceedance.
#[derive(Debug, Clone)]
pub struct SvtSession {
    threshold: f64,
    epsilon: f64,
    noisy_threshold: f64,
    query_scale: f64,
    halted: bool,
    queries_answered: usize,
}

impl SvtSession {
    /// Threshold noise Laplace(2/eps), per-query noise Laplace(4/eps).
    pub fn new<R: Rng + ?Sized>(threshold: f64, epsilon: f64, rng: &mut R) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid("epsilon", format!("{epsilon} must be positive")));
        }
        Self::with_scales(threshold, epsilon, 2.0 / epsilon, 4.0 / epsilon, rng)
    }

    /// Custom noise scales, e.g. the `Lap(1/eps)` pair TreeLog uses.
    pub fn with_scales<R: Rng + ?Sized>(
        threshold: f64,
        epsilon: f64,
        threshold_scale: f64,
        query_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let noise = sample_laplace(threshold_scale, rng)?;
        if !(query_scale.is_finite() && query_scale > 0.0) {
            return Err(invalid(
                "query_scale",
                format!("{query_scale} must be positive"),
            ));
        }
        Ok(Self {
            threshold,
            epsilon,
            noisy_threshold: threshold + noise,
            query_scale,
            halted: false,
            queries_answered: 0,
        })
    }

    pub fn query<R: Rng + ?Sized>(&mut self, value: f64, rng: &mut R) -> Result<SvtAnswer> {
        if self.halted {
            return Err(Error::SessionHalted);
        }
        self.queries_answered += 1;
        if value + laplace(self.query_scale, rng) >= self.noisy_threshold {
            self.halted = true;
            Ok(SvtAnswer::Top)
        } else {
            Ok(SvtAnswer::Bottom)
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn noisy_threshold(&self) -> f64 {
        self.noisy_threshold
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn queries_answered(&self) -> usize {
        self.queries_answered
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.5, 1e-6).is_ok());
        assert!(PrivacyBudget::new(1.0, 0.0).is_ok());
        assert!(PrivacyBudget::new(0.0, 0.1).is_err());
        assert!(PrivacyBudget::new(1.5, 0.1).is_err());
        assert!(PrivacyBudget::new(0.5, 1.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn geometric_pmf_at_epsilon_one() {
        assert!((geometric_pmf(1.0, 0) - 0.632_120_558_8).abs() < 1e-9);
    }

    #[test]
    fn geometric_rejects_bad_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_geometric(0.0, &mut rng).is_err());
        assert!(sample_geometric(-0.1, &mut rng).is_err());
        assert!(sample_geometric(1.2, &mut rng).is_err());
        assert!(sample_geometric_p(0.0, &mut rng).is_err());
    }

    #[test]
    fn geometric_p_one_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(sample_geometric_p(1.0, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn geometric_mean_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let sum: u64 = (0..n)
            .map(|_| sample_geometric(0.5, &mut rng).unwrap())
            .sum();
        let expected = (-0.5f64).exp() / (1.0 - (-0.5f64).exp());
        assert!((sum as f64 / n as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn laplace_tail_and_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_laplace(1.0, &mut rng).unwrap())
            .collect();
        let tail = draws.iter().filter(|x| x.abs() > 2.0).count() as f64 / n as f64;
        assert!((tail - (-2.0f64).exp()).abs() < 0.005);
        draws.truncate(100_000);
        let mid = draws.len() / 2;
        let (_, median, _) = draws.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        assert!(median.abs() < 0.02);
        assert!(sample_laplace(0.0, &mut rng).is_err());
        assert!(sample_laplace(-1.0, &mut rng).is_err());
    }

    #[test]
    fn laplace_scale_passthrough() {
        let eps = 0.1;
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let x = sample_laplace(1.0 / eps, &mut a).unwrap();
        let y = sample_laplace(1.0, &mut b).unwrap();
        assert!((x - 10.0 * y).abs() < 1e-9);
    }

    #[test]
    fn exp_mech_single_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(
            exponential_mechanism_scores(&[3.0], 1.0, 1.0, &mut rng).unwrap(),
            0
        );
        assert_eq!(
            exponential_mechanism_scores(&[], 1.0, 1.0, &mut rng),
            Err(Error::EmptyCandidates)
        );
    }

    #[test]
    fn exp_mech_two_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| exponential_mechanism_scores(&[0.0, 2.0], 1.0, 1.0, &mut rng).unwrap() == 1)
            .count();
        let e = std::f64::consts::E;
        let p = e / (1.0 + e);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn exp_mech_handles_huge_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let idx = exponential_mechanism_scores(&[1e6, 1e6 + 100.0], 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(idx, 1);
    }

    #[test]
    fn svt_halts() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = SvtSession::new(0.0, 1.0, &mut rng).unwrap();
        assert_eq!(s.query(1e6, &mut rng).unwrap(), SvtAnswer::Top);
        assert!(s.halted());
        assert_eq!(s.query(0.0, &mut rng), Err(Error::SessionHalted));
        assert_eq!(s.queries_answered(), 1);
    }
}
