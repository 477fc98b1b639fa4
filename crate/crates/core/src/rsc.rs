//! The Reorder-Slice-Compute engine.
//!
//! A session repeatedly reorders the remaining data with an [`OrderMap`],
//! removes a prefix whose length is the requested size plus geometric noise,
//! and optionally runs a computation on it. Slices are kept for later
//! (delayed) computations.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mech::{geometric_with_rate, PrivacyBudget};

/// A deterministic mapping from a multiset to a list.
///
/// Implementations are expected to be adjacency preserving: for `D` and
/// `D ∪ {x}` the two outputs are either equal or differ by one inserted
/// element. Most maps are permutations of their input; a map may also drop
/// elements (see [`DedupAscending`]).
pub trait OrderMap<T> {
    fn name(&self) -> &str;

    fn apply(&self, data: &[T]) -> Vec<T>;

    /// Splits `data` into the first `k` elements of `apply(data)` (in order)
    /// and the rest (in unspecified order).
    fn take_prefix(&self, data: Vec<T>, k: usize) -> (Vec<T>, Vec<T>) {
        let mut mapped = self.apply(&data);
        let k = k.min(mapped.len());
        let rest = mapped.split_off(k);
        (mapped, rest)
    }
}

/// Sorts by a comparator. `take_prefix` uses selection, so it costs O(n)
/// plus sorting the prefix.
pub struct SortOrder<F> {
    name: String,
    cmp: F,
}

impl<F> SortOrder<F> {
    pub fn new(name: impl Into<String>, cmp: F) -> Self {
        Self {
            name: name.into(),
            cmp,
        }
    }
}

impl<F> fmt::Debug for SortOrder<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SortOrder")
            .field("name", &self.name)
            .finish()
    }
}

impl<T: Clone, F: Fn(&T, &T) -> Ordering> OrderMap<T> for SortOrder<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn apply(&self, data: &[T]) -> Vec<T> {
        let mut out = data.to_vec();
        out.sort_unstable_by(&self.cmp);
        out
    }

    fn take_prefix(&self, mut data: Vec<T>, k: usize) -> (Vec<T>, Vec<T>) {
        // presorted input (either direction) keeps the remainder sorted
        if data.is_sorted_by(|a, b| (self.cmp)(a, b) != Ordering::Greater) {
            let rest = data.split_off(k.min(data.len()));
            return (data, rest);
        }
        if data.is_sorted_by(|a, b| (self.cmp)(a, b) != Ordering::Less) {
            let mut prefix = data.split_off(data.len() - k.min(data.len()));
            prefix.reverse();
            return (prefix, data);
        }
        if k >= data.len() {
            data.sort_unstable_by(&self.cmp);
            return (data, Vec::new());
        }
        if k > 0 {
            data.select_nth_unstable_by(k, &self.cmp);
        }
        let rest = data.split_off(k);
        data.sort_unstable_by(&self.cmp);
        (data, rest)
    }
}

/// Increasing order.
pub fn ascending<T: Ord>() -> SortOrder<fn(&T, &T) -> Ordering> {
    SortOrder::new("ascending", T::cmp)
}

/// Decreasing order.
pub fn descending<T: Ord>() -> SortOrder<fn(&T, &T) -> Ordering> {
    fn rev<T: Ord>(a: &T, b: &T) -> Ordering {
        b.cmp(a)
    }
    SortOrder::new("descending", rev::<T>)
}

/// Sorted distinct values. Adding a duplicate leaves the output unchanged,
/// so this map can eliminate the differing element of an adjacent pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct DedupAscending;

impl<T: Ord + Clone> OrderMap<T> for DedupAscending {
    fn name(&self) -> &str {
        "dedup-ascending"
    }

    fn apply(&self, data: &[T]) -> Vec<T> {
        let mut out = data.to_vec();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A per-slice computation. `Sync` so scripts can be shared by trial workers.
pub type SliceAlgorithm<T, O> = dyn Fn(&[T]) -> O + Sync;

/// How the engine perturbs requested slice sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SliceNoise {
    /// `m + Geom(1 - e^{-epsilon})`.
    Geometric { epsilon: f64 },
    /// Exactly `m`; the cumulative variant of the interior point solver.
    Deterministic,
}

impl SliceNoise {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            SliceNoise::Geometric { epsilon } => geometric_with_rate(epsilon, rng),
            SliceNoise::Deterministic => 0,
        }
    }
}

/// One slicing request: requested size, order map, optional computation.
pub struct SliceComputation<'a, T, O> {
    pub m: usize,
    pub map: &'a (dyn OrderMap<T> + Sync),
    pub algorithm: Option<&'a SliceAlgorithm<T, O>>,
}

impl<T, O> Clone for SliceComputation<'_, T, O> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T, O> Copy for SliceComputation<'_, T, O> {}

impl<'a, T, O> SliceComputation<'a, T, O> {
    pub fn new(m: usize, map: &'a (dyn OrderMap<T> + Sync)) -> Self {
        Self {
            m,
            map,
            algorithm: None,
        }
    }

    pub fn with_algorithm(mut self, algorithm: &'a SliceAlgorithm<T, O>) -> Self {
        self.algorithm = Some(algorithm);
        self
    }
}

/// What one slicing step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceOutcome<O> {
    pub step: usize,
    pub result: Option<O>,
    pub requested: usize,
    /// `m + noise` before clamping to the remaining size.
    pub noisy_size: u64,
    /// Elements actually removed.
    pub taken: usize,
}

/// Live state of one engine execution.
#[derive(Debug, Clone)]
pub struct RscSession<T> {
    remaining: Vec<T>,
    slices: Vec<Vec<T>>,
    uses: Vec<usize>,
    tau: usize,
    k: usize,
    noise: SliceNoise,
    delta: f64,
    original_len: usize,
}

impl<T: Clone> RscSession<T> {
    /// A session with geometric slice noise at the budget's epsilon.
    pub fn new(data: Vec<T>, budget: PrivacyBudget, tau: usize) -> Result<Self> {
        let mut s = Self::with_noise(
            data,
            SliceNoise::Geometric {
                epsilon: budget.epsilon(),
            },
            tau,
        )?;
        s.delta = budget.delta();
        Ok(s)
    }

    pub fn with_noise(data: Vec<T>, noise: SliceNoise, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(invalid("tau", "must be at least 1"));
        }
        if let SliceNoise::Geometric { epsilon } = noise {
            if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
                return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
            }
        }
        Ok(Self {
            original_len: data.len(),
            remaining: data,
            slices: Vec::new(),
            uses: Vec::new(),
            tau,
            k: 1,
            noise,
            delta: 0.0,
        })
    }

    /// Allow up to `k` delayed computations per slice.
    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        self.k = k;
        Ok(self)
    }

    /// Draws the slice size, removes the prefix of `map(remaining)` and runs
    /// the optional computation on it.
    pub fn select_and_compute<O, R: Rng + ?Sized>(
        &mut self,
        spec: SliceComputation<'_, T, O>,
        rng: &mut R,
    ) -> Result<SliceOutcome<O>> {
        if self.slices.len() >= self.tau {
            return Err(Error::SessionExhausted { tau: self.tau });
        }
        let noisy = (spec.m as u64).saturating_add(self.noise.draw(rng));
        let take = usize::try_from(noisy).unwrap_or(usize::MAX);
        let data = std::mem::take(&mut self.remaining);
        let (slice, rest) = spec.map.take_prefix(data, take);
        self.remaining = rest;
        let result = spec.algorithm.map(|a| a(&slice));
        let taken = slice.len();
        self.slices.push(slice);
        self.uses.push(0);
        Ok(SliceOutcome {
            step: self.slices.len() - 1,
            result,
            requested: spec.m,
            noisy_size: noisy,
            taken,
        })
    }

    /// Runs `algorithm` on a stored slice. Each slice accepts at most `k`
    /// computations.
    pub fn delayed_compute<O>(
        &mut self,
        step: usize,
        algorithm: impl FnOnce(&[T]) -> O,
    ) -> Result<O> {
        let slice = self.slices.get(step).ok_or(Error::UnknownSlice(step))?;
        if self.uses[step] >= self.k {
            return Err(Error::SliceReuse {
                step,
                limit: self.k,
            });
        }
        self.uses[step] += 1;
        Ok(algorithm(slice))
    }

    /// Read access to a stored slice, for bookkeeping and tests. Private
    /// computations should go through [`delayed_compute`](Self::delayed_compute).
    pub fn slice(&self, step: usize) -> Option<&[T]> {
        self.slices.get(step).map(Vec::as_slice)
    }

    pub fn remaining(&self) -> &[T] {
        &self.remaining
    }

    pub fn into_remaining(self) -> Vec<T> {
        self.remaining
    }

    pub fn step(&self) -> usize {
        self.slices.len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise(&self) -> SliceNoise {
        self.noise
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }
}

/// Explicit privacy bound for one or more engine executions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingBound {
    pub epsilon_total: f64,
    pub delta_total: f64,
    /// Number of data-holder calls exceeded with probability at most `delta_hat`.
    pub holder_call_cap: u64,
    pub epsilon_per_first_phase_call: f64,
    pub epsilon_per_delayed_call: f64,
    pub label: String,
}

pub const CONSERVATIVE_LABEL: &str = "conservative explicit bound";

/// Smallest `w` with `Pr[Bin(w, 1/6) < applications] <= delta_hat`: the
/// number of holder calls that `applications` executions exceed with
/// probability at most `delta_hat`, given each call synchronizes with
/// probability at least 1/6.
pub fn holder_call_cap(applications: u64, delta_hat: f64) -> u64 {
    let a = applications.max(1);
    if a == 1 {
        // (5/6)^w <= delta_hat
        return ((1.0 / delta_hat).ln() / 1.2f64.ln()).ceil().max(1.0) as u64;
    }
    let mut w = a;
    loop {
        if binomial_lower_tail(w, a - 1, 1.0 / 6.0) <= delta_hat {
            return w;
        }
        w += 1;
    }
}

/// `Pr[Bin(n, p) <= k]`, summed in log space.
fn binomial_lower_tail(n: u64, k: u64, p: f64) -> f64 {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_coef = 0.0f64;
    let mut total = 0.0;
    for i in 0..=k.min(n) {
        if i > 0 {
            log_coef += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        total += (log_coef + i as f64 * lp + (n - i) as f64 * lq).exp();
    }
    total
}

/// Conservative explicit privacy cost.
///
/// Each first-phase holder call costs `3 eps`, each further delayed call on a
/// holder-stored slice `2 eps`. With `w = holder_call_cap(applications, delta_hat)`:
///
/// `eps_total = 3 eps w + 2 eps (k - 1) w`,
/// `delta_total = delta_hat + 2 k applications tau delta`.
pub fn privacy_cost(
    epsilon_step: f64,
    delta_step: f64,
    tau: usize,
    k: usize,
    delta_hat: f64,
    applications: u64,
) -> Result<AccountingBound> {
    if !(epsilon_step.is_finite() && epsilon_step >= 0.0) {
        return Err(invalid(
            "epsilon",
            format!("{epsilon_step} must be nonnegative"),
        ));
    }
    if !(delta_step.is_finite() && (0.0..1.0).contains(&delta_step)) {
        return Err(invalid("delta", format!("{delta_step} not in [0, 1)")));
    }
    if !(delta_hat > 0.0 && delta_hat < 1.0) {
        return Err(invalid("delta_hat", format!("{delta_hat} not in (0, 1)")));
    }
    if tau == 0 || k == 0 || applications == 0 {
        return Err(invalid("tau/k/applications", "must be positive"));
    }
    let w = holder_call_cap(applications, delta_hat);
    let first = 3.0 * epsilon_step;
    let delayed = 2.0 * epsilon_step;
    let epsilon_total = first * w as f64 + delayed * (k as f64 - 1.0) * w as f64;
    let delta_total = delta_hat + 2.0 * k as f64 * applications as f64 * tau as f64 * delta_step;
    Ok(AccountingBound {
        epsilon_total,
        delta_total,
        holder_call_cap: w,
        epsilon_per_first_phase_call: first,
        epsilon_per_delayed_call: delayed,
        label: CONSERVATIVE_LABEL.to_string(),
    })
}
