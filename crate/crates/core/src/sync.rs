//! Synchronization mapping and the simulator/data-holder pair.
//!
//! The simulator knows two adjacent datasets `D` and `D ∪ {x}` but not which
//! one is real. It replays an engine script, handling every step where the
//! two executions coincide on its own and asking the data holder (who knows
//! the private bit) only when the differing element might land in a slice.
//! The holder perturbs its reply with the synchronization mapping so that,
//! with probability at least 1/6 per call, both worlds collapse into one.
//!
//! Running the simulator and counting holder calls is an executable audit of
//! the engine's privacy argument.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mech::geometric_with_rate;
use crate::rsc::{OrderMap, RscSession, SliceComputation, SliceNoise};
use crate::stats::{histogram, run_trials};

/// `(alpha, beta)`: reported offset and whether the two worlds synchronized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SyncOutcome {
    pub alpha: u64,
    pub beta: bool,
}

/// `t_i = max(0, e^{-i eps} + e^{-(i+1) eps} - 1)`.
pub fn sync_threshold(epsilon: f64, i: u64) -> f64 {
    let a = (-(i as f64) * epsilon).exp();
    let b = (-((i + 1) as f64) * epsilon).exp();
    (a + b - 1.0).max(0.0)
}

/// First `i` with `t_i = 0`; every offset at or beyond it synchronizes
/// with probability one.
pub fn sync_horizon(epsilon: f64) -> u64 {
    let mut i = 0;
    while sync_threshold(epsilon, i) > 0.0 {
        i += 1;
    }
    i
}

/// Probability that `R^b(m)` does not synchronize.
fn stay_probability(b: bool, m: u64, epsilon: f64) -> f64 {
    if b && m == 0 {
        // t_0 e^eps = 1 exactly; avoid rounding leaking mass onto (-1, 1)
        return 1.0;
    }
    let t = sync_threshold(epsilon, m);
    if t == 0.0 {
        return 0.0;
    }
    let shift = if b { m + 1 } else { m };
    (t * (shift as f64 * epsilon).exp()).min(1.0)
}

/// The two-point distribution of `R^b(m)`: `[(stay, p), (sync, 1 - p)]`.
pub fn sync_map_conditional(b: bool, m: u64, epsilon: f64) -> [(SyncOutcome, f64); 2] {
    let p = stay_probability(b, m, epsilon);
    let synced_alpha = if b { m.saturating_sub(1) } else { m };
    [
        (
            SyncOutcome {
                alpha: m,
                beta: false,
            },
            p,
        ),
        (
            SyncOutcome {
                alpha: synced_alpha,
                beta: true,
            },
            1.0 - p,
        ),
    ]
}

/// Samples `R^b(m)`.
pub fn sync_map<R: Rng + ?Sized>(
    b: bool,
    m: u64,
    epsilon: f64,
    rng: &mut R,
) -> Result<SyncOutcome> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
    }
    let [stay, synced] = sync_map_conditional(b, m, epsilon);
    Ok(if rng.random::<f64>() < stay.1 {
        stay.0
    } else {
        synced.0
    })
}

/// Exact law of `R^b(Geom(1 - e^{-eps}))` for offsets up to `cutoff`, plus
/// the aggregate mass beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSyncDist {
    pub b: bool,
    pub epsilon: f64,
    pub cutoff: u64,
    pub outcomes: Vec<(SyncOutcome, f64)>,
    /// Mass on outcomes with `alpha > cutoff`; all of them have `beta = 1`.
    pub tail_mass: f64,
}

impl ExactSyncDist {
    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|o| o.1).sum::<f64>() + self.tail_mass
    }

    pub fn sync_probability(&self) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| o.0.beta)
            .map(|o| o.1)
            .sum::<f64>()
            + self.tail_mass
    }

    pub fn mass(&self, outcome: SyncOutcome) -> f64 {
        self.outcomes
            .iter()
            .find(|o| o.0 == outcome)
            .map_or(0.0, |o| o.1)
    }
}

pub fn sync_map_exact_dist(b: bool, epsilon: f64, cutoff: u64) -> Result<ExactSyncDist> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
    }
    let gamma = sync_horizon(epsilon);
    if cutoff < gamma + 1 {
        return Err(Error::CutoffTooSmall {
            cutoff: cutoff as usize,
            gamma: gamma as usize,
        });
    }
    let g = |i: u64| (-(i as f64) * epsilon).exp() * (-(-epsilon).exp_m1());
    let mut outcomes = Vec::with_capacity(2 * cutoff as usize + 2);
    for i in 0..=cutoff {
        let stay = stay_probability(b, i, epsilon);
        outcomes.push((
            SyncOutcome {
                alpha: i,
                beta: false,
            },
            g(i) * stay,
        ));
        // (i, 1) arises from offset i under b = 0 and from offset i + 1 under b = 1
        let from = if b { i + 1 } else { i };
        let synced = g(from) * (1.0 - stay_probability(b, from, epsilon));
        outcomes.push((
            SyncOutcome {
                alpha: i,
                beta: true,
            },
            synced,
        ));
    }
    let first_unlisted = if b { cutoff + 2 } else { cutoff + 1 };
    let tail_mass = (-(first_unlisted as f64) * epsilon).exp();
    Ok(ExactSyncDist {
        b,
        epsilon,
        cutoff,
        outcomes,
        tail_mass,
    })
}

/// Checks of the three synchronization properties on the exact laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncLawReport {
    pub epsilon: f64,
    pub cutoff: u64,
    pub total_mass: [f64; 2],
    pub support_ok: bool,
    pub max_log_ratio: f64,
    pub ratio_ok: bool,
    pub sync_probability: [f64; 2],
    pub sync_probability_ok: bool,
}

impl SyncLawReport {
    pub fn passes(&self) -> bool {
        self.support_ok
            && self.ratio_ok
            && self.sync_probability_ok
            && self.total_mass.iter().all(|m| (m - 1.0).abs() <= 1e-12)
    }
}

/// Evaluates support, indistinguishability (within `tol` on the ratio) and the
/// 1/6 synchronization floor at the given epsilon.
pub fn check_sync_law(epsilon: f64, tol: f64) -> Result<SyncLawReport> {
    let cutoff = sync_horizon(epsilon) + 2;
    let d0 = sync_map_exact_dist(false, epsilon, cutoff)?;
    let d1 = sync_map_exact_dist(true, epsilon, cutoff)?;

    let mut support_ok = true;
    for m in 0..=cutoff + 1 {
        for b in [false, true] {
            for (o, p) in sync_map_conditional(b, m, epsilon) {
                if p <= 0.0 {
                    continue;
                }
                let ok = if b {
                    (o.alpha == m && !o.beta) || (m >= 1 && o.alpha == m - 1 && o.beta)
                } else {
                    o.alpha == m
                };
                support_ok &= ok && (0.0..=1.0).contains(&p);
            }
        }
    }

    let lo = (-epsilon).exp();
    let hi = epsilon.exp();
    let mut ratio_ok = true;
    let mut max_log_ratio: f64 = 0.0;
    let pairs = d0
        .outcomes
        .iter()
        .map(|&(o, p)| (p, d1.mass(o)))
        .chain(std::iter::once((d0.tail_mass, d1.tail_mass)));
    for (p0, p1) in pairs {
        if p0 == 0.0 && p1 == 0.0 {
            continue;
        }
        if p0 == 0.0 || p1 == 0.0 {
            ratio_ok = false;
            max_log_ratio = f64::INFINITY;
            continue;
        }
        let r = p0 / p1;
        ratio_ok &= r >= lo - tol && r <= hi + tol;
        max_log_ratio = max_log_ratio.max(r.ln().abs());
    }

    let sync_probability = [d0.sync_probability(), d1.sync_probability()];
    Ok(SyncLawReport {
        epsilon,
        cutoff,
        total_mass: [d0.total(), d1.total()],
        support_ok,
        max_log_ratio,
        ratio_ok,
        sync_probability,
        sync_probability_ok: sync_probability.iter().all(|&p| p >= 1.0 / 6.0),
    })
}

/// Computation the holder runs on its slice.
pub type HolderAlgorithm<T, O> = dyn Fn(&[T]) -> O;

/// Reply of the data holder.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderReply<O> {
    pub q_hat: u64,
    pub beta: bool,
    pub result: Option<O>,
    /// Size of the slice the holder actually used. Not visible to the
    /// simulator; kept for diagnostics.
    pub m_hat: u64,
}

fn with_extra<T: Clone>(data: &[T], x: &T) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len() + 1);
    out.extend_from_slice(data);
    out.push(x.clone());
    out
}

fn holder_slice<T: Clone>(
    b: bool,
    data: &[T],
    x: &T,
    q: u64,
    map: &dyn OrderMap<T>,
    epsilon: f64,
    rng: &mut (impl Rng + ?Sized),
) -> (Vec<T>, u64, u64) {
    let delta = geometric_with_rate(epsilon, rng);
    let m_hat = q.saturating_add(delta);
    let source = if b {
        with_extra(data, x)
    } else {
        data.to_vec()
    };
    let take = usize::try_from(m_hat).unwrap_or(usize::MAX);
    let (slice, _) = map.take_prefix(source, take);
    (slice, m_hat, delta)
}

/// One stateless holder query: slice `q + Geom` elements of `map(D)` (b = 0)
/// or `map(D ∪ {x})` (b = 1), run the algorithm, and report
/// `q_hat = q + alpha` with `(alpha, beta) = R^b(noise)`.
#[allow(clippy::too_many_arguments)]
pub fn holder_query<T: Clone, O, R: Rng + ?Sized>(
    b: bool,
    data: &[T],
    x: &T,
    q: u64,
    algorithm: Option<&HolderAlgorithm<T, O>>,
    map: &dyn OrderMap<T>,
    epsilon: f64,
    rng: &mut R,
) -> Result<HolderReply<O>> {
    let (slice, m_hat, delta) = holder_slice(b, data, x, q, map, epsilon, rng);
    let result = algorithm.map(|a| a(&slice));
    let o = sync_map(b, delta, epsilon, rng)?;
    Ok(HolderReply {
        q_hat: q + o.alpha,
        beta: o.beta,
        result,
        m_hat,
    })
}

/// The data holder with storage for delayed computations.
#[derive(Debug, Clone)]
pub struct DataHolder<T> {
    b: bool,
    epsilon: f64,
    stored: BTreeMap<usize, Vec<T>>,
    calls: usize,
}

impl<T: Clone> DataHolder<T> {
    pub fn new(b: bool, epsilon: f64) -> Self {
        Self {
            b,
            epsilon,
            stored: BTreeMap::new(),
            calls: 0,
        }
    }

    /// First-phase query for slicing step `step`.
    #[allow(clippy::too_many_arguments)]
    pub fn query<O, R: Rng + ?Sized>(
        &mut self,
        step: usize,
        data: &[T],
        x: &T,
        q: u64,
        algorithm: Option<&HolderAlgorithm<T, O>>,
        map: &dyn OrderMap<T>,
        rng: &mut R,
    ) -> Result<HolderReply<O>> {
        self.calls += 1;
        let (slice, m_hat, delta) = holder_slice(self.b, data, x, q, map, self.epsilon, rng);
        let result = algorithm.map(|a| a(&slice));
        self.stored.insert(step, slice);
        let o = sync_map(self.b, delta, self.epsilon, rng)?;
        Ok(HolderReply {
            q_hat: q + o.alpha,
            beta: o.beta,
            result,
            m_hat,
        })
    }

    /// Second-phase query on a slice the holder produced.
    pub fn delayed<O>(&self, step: usize, algorithm: impl FnOnce(&[T]) -> O) -> Result<O> {
        let slice = self.stored.get(&step).ok_or(Error::UnknownSlice(step))?;
        Ok(algorithm(slice))
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

/// Record of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTranscript<T, O> {
    pub published: Vec<Option<O>>,
    pub holder_calls: usize,
    pub holder_steps: Vec<usize>,
    /// Status after each step (true = synchronized).
    pub status_trace: Vec<bool>,
    pub final_status: bool,
    pub final_diff: Option<T>,
}

/// The simulator state machine.
#[derive(Debug, Clone)]
pub struct Simulator<T> {
    remaining: Vec<T>,
    x: Option<T>,
    epsilon: f64,
    stored: BTreeMap<usize, Vec<T>>,
    holder_steps: Vec<usize>,
    holder: DataHolder<T>,
    step: usize,
    published_status: Vec<bool>,
}

impl<T: Clone + PartialEq> Simulator<T> {
    /// `b` is handed to the embedded holder only.
    pub fn new(data: Vec<T>, x: T, b: bool, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
        }
        Ok(Self {
            remaining: data,
            x: Some(x),
            epsilon,
            stored: BTreeMap::new(),
            holder_steps: Vec::new(),
            holder: DataHolder::new(b, epsilon),
            step: 0,
            published_status: Vec::new(),
        })
    }

    pub fn synchronized(&self) -> bool {
        self.x.is_none()
    }

    /// Simulates one engine step and returns the published result.
    pub fn step<O, R: Rng + ?Sized>(
        &mut self,
        spec: SliceComputation<'_, T, O>,
        rng: &mut R,
    ) -> Result<Option<O>> {
        let step = self.step;
        self.step += 1;
        let map = spec.map;
        let data = std::mem::take(&mut self.remaining);

        let Some(x) = self.x.take() else {
            return Ok(self.plain_step(step, data, spec, rng));
        };
        let e0 = map.apply(&data);
        let e1 = map.apply(&with_extra(&data, &x));
        if e0 == e1 {
            return Ok(self.plain_step(step, data, spec, rng));
        }
        // locate the inserted element of e1 relative to e0
        let pos = e0
            .iter()
            .zip(&e1)
            .position(|(a, b)| a != b)
            .unwrap_or(e0.len());
        if e1.len() != e0.len() + 1 || e1[pos + 1..] != e0[pos..] {
            return Err(Error::NotAdjacent(map.name().to_string()));
        }
        let p = pos as u64 + 1;
        let x_mapped = e1[pos].clone();

        let m_hat = (spec.m as u64).saturating_add(geometric_with_rate(self.epsilon, rng));
        let result;
        if m_hat < p {
            let cut = m_hat as usize;
            result = spec.algorithm.map(|a| a(&e0[..cut]));
            self.stored.insert(step, e0[..cut].to_vec());
            self.remaining = e0[cut..].to_vec();
            self.x = Some(x_mapped);
        } else {
            let q = p.max(spec.m as u64);
            let algorithm = spec.algorithm.map(|a| a as &HolderAlgorithm<T, O>);
            let reply = self.holder.query(step, &data, &x, q, algorithm, map, rng)?;
            self.holder_steps.push(step);
            result = reply.result;
            let cut = usize::try_from(reply.q_hat)
                .unwrap_or(usize::MAX)
                .min(e0.len());
            if !reply.beta && (reply.q_hat as usize) <= e0.len() && reply.q_hat >= 1 {
                self.x = Some(e0[cut - 1].clone());
            }
            self.remaining = e0[cut..].to_vec();
        }
        self.published_status.push(self.x.is_none());
        Ok(result)
    }

    fn plain_step<O, R: Rng + ?Sized>(
        &mut self,
        step: usize,
        data: Vec<T>,
        spec: SliceComputation<'_, T, O>,
        rng: &mut R,
    ) -> Option<O> {
        let m_hat = (spec.m as u64).saturating_add(geometric_with_rate(self.epsilon, rng));
        let (slice, rest) = spec
            .map
            .take_prefix(data, usize::try_from(m_hat).unwrap_or(usize::MAX));
        let result = spec.algorithm.map(|a| a(&slice));
        self.stored.insert(step, slice);
        self.remaining = rest;
        self.published_status.push(true);
        result
    }

    /// Delayed compute: simulator-held slices are answered locally, holder
    /// slices are forwarded.
    pub fn delayed_compute<O>(&self, step: usize, algorithm: impl FnOnce(&[T]) -> O) -> Result<O> {
        if self.holder_steps.contains(&step) {
            self.holder.delayed(step, algorithm)
        } else {
            let s = self.stored.get(&step).ok_or(Error::UnknownSlice(step))?;
            Ok(algorithm(s))
        }
    }

    pub fn holder_calls(&self) -> usize {
        self.holder.calls()
    }

    pub fn holder_steps(&self) -> &[usize] {
        &self.holder_steps
    }

    pub fn remaining(&self) -> &[T] {
        &self.remaining
    }

    pub fn diff(&self) -> Option<&T> {
        self.x.as_ref()
    }

    fn into_transcript<O>(self, published: Vec<Option<O>>) -> SimTranscript<T, O> {
        SimTranscript {
            published,
            holder_calls: self.holder.calls(),
            holder_steps: self.holder_steps,
            final_status: self.x.is_none(),
            status_trace: self.published_status,
            final_diff: self.x,
        }
    }
}

/// Runs the whole script through the simulator.
pub fn simulate<T: Clone + PartialEq, O, R: Rng + ?Sized>(
    data: Vec<T>,
    x: T,
    b: bool,
    script: &[SliceComputation<'_, T, O>],
    epsilon: f64,
    rng: &mut R,
) -> Result<SimTranscript<T, O>> {
    let mut sim = Simulator::new(data, x, b, epsilon)?;
    let mut published = Vec::with_capacity(script.len());
    for spec in script {
        published.push(sim.step(*spec, rng)?);
    }
    Ok(sim.into_transcript(published))
}

/// Runs the script directly through the engine on `data`.
pub fn run_direct<T: Clone, O, R: Rng + ?Sized>(
    data: Vec<T>,
    script: &[SliceComputation<'_, T, O>],
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<Option<O>>> {
    let mut session =
        RscSession::with_noise(data, SliceNoise::Geometric { epsilon }, script.len().max(1))?;
    script
        .iter()
        .map(|spec| session.select_and_compute(*spec, rng).map(|o| o.result))
        .collect()
}

/// Summary of holder-call counts over many simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallCountAudit {
    pub epsilon: f64,
    pub trials: u64,
    pub histogram: Vec<HistogramBin>,
    /// `(w, Pr[count > w])` for `w = 1..=20`.
    pub tail: Vec<(u64, f64)>,
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub calls: u64,
    pub frequency: u64,
}

/// Simulates `trials` runs with per-trial streams of `seed` and tabulates
/// holder-call counts.
pub fn audit_call_count<T, O>(
    data: &[T],
    x: &T,
    b: bool,
    script: &[SliceComputation<'_, T, O>],
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> Result<CallCountAudit>
where
    T: Clone + PartialEq + Send + Sync,
    O: Send,
{
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let counts = run_trials(seed, trials, |_, rng| {
        simulate(data.to_vec(), x.clone(), b, script, epsilon, rng).map(|t| t.holder_calls as u64)
    })
    .into_iter()
    .collect::<Result<Vec<u64>>>()?;
    Ok(summarize_counts(epsilon, &counts))
}

pub fn summarize_counts(epsilon: f64, counts: &[u64]) -> CallCountAudit {
    let trials = counts.len() as u64;
    let hist = histogram(counts.iter().copied());
    let tail = (1..=20u64)
        .map(|w| {
            (
                w,
                counts.iter().filter(|&&c| c > w).count() as f64 / trials as f64,
            )
        })
        .collect();
    CallCountAudit {
        epsilon,
        trials,
        histogram: hist
            .into_iter()
            .map(|(calls, frequency)| HistogramBin { calls, frequency })
            .collect(),
        tail,
        mean: counts.iter().sum::<u64>() as f64 / trials as f64,
    }
}
