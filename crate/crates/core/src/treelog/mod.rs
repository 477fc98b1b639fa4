//! Private interior point solver.
//!
//! Given a dataset over `[0, 2^L)`, returns a point between its minimum and
//! maximum. Each recursion level trims `t` elements from both ends, checks
//! (through AboveThreshold) whether the heavy path is balanced enough for a
//! direct walk, and otherwise embeds the data into the universe of path
//! levels `{1..L}` and recurses there. All trimming goes through the slicing
//! engine, so the privacy cost does not grow with the number of levels.

mod embed;
pub mod relabel;
mod tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use embed::{
    embed, gamma, gamma_sensitivity_check, gamma_sorted, heavy_path, level_label, one_heavy_round,
    EmbedOrder, EmbeddedList, HeavyPath,
};
pub use tree::{
    f_ipp, f_ipp_sorted, is_interior, log_star, log_star_universe, subtree_weight, TreeVertex,
    Universe,
};

use crate::error::{invalid, Error, Result};
use crate::mech::{
    choosing_mechanism, exponential_mechanism_scores, BoundedQuality, QualityFunction, SvtAnswer,
    SvtSession,
};
use crate::rsc::{ascending, descending, RscSession, SliceComputation, SliceNoise};

/// `ceil((100 / eps) ln(1 / delta))`.
pub fn trimming_parameter(epsilon: f64, delta: f64) -> usize {
    (100.0 / epsilon * (1.0 / delta).ln()).ceil() as usize
}

/// Parameters of one solver run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IppConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Trimming parameter.
    pub t: usize,
    pub noise: SliceNoise,
    /// Refuse inputs below `10 t log*|X|` instead of attempting them.
    pub enforce_regime: bool,
}

impl IppConfig {
    /// Standard parameters: `t = ceil(100/eps ln(1/delta))`, geometric slice
    /// noise, regime enforced.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid("epsilon", format!("{epsilon} not in (0, 1]")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("{delta} not in (0, 1)")));
        }
        Ok(Self {
            epsilon,
            delta,
            t: trimming_parameter(epsilon, delta),
            noise: SliceNoise::Geometric { epsilon },
            enforce_regime: true,
        })
    }

    /// Same parameters with exact slice sizes.
    pub fn deterministic(mut self) -> Self {
        self.noise = SliceNoise::Deterministic;
        self
    }

    /// Attempt any input size; short slices surface as errors.
    pub fn permissive(mut self) -> Self {
        self.enforce_regime = false;
        self
    }

    /// `10 t log*|X|`.
    pub fn regime(&self, universe: Universe) -> usize {
        10 * self.t * log_star_universe(universe.bits()) as usize
    }
}

/// How a recursion level finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelRoute {
    /// Exponential mechanism over a universe of at most 8 points.
    Base,
    /// The balancedness gate fired and the heavy walk produced the answer.
    HeavyRound,
    /// Embedded and recursed.
    Recursed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub bits: u32,
    pub n: usize,
    pub route: LevelRoute,
    pub gamma: Option<usize>,
    /// Sizes of the low, high and embed slices that were taken.
    pub slices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IppOutcome {
    pub value: u64,
    pub levels: Vec<LevelTrace>,
}

/// Vertices at a fixed depth scored by how many slice elements they hold.
struct DepthCount {
    bits: u32,
    depth: u32,
}

impl DepthCount {
    fn prefix(&self, x: u64) -> u64 {
        if self.depth == 0 {
            0
        } else {
            x >> (self.bits - self.depth)
        }
    }
}

impl QualityFunction<[u64], u64> for DepthCount {
    fn evaluate(&self, sorted: &[u64], prefix: &u64) -> f64 {
        sorted
            .iter()
            .filter(|&&x| self.prefix(x) == *prefix)
            .count() as f64
    }

    fn bound_k(&self) -> Option<usize> {
        Some(1)
    }
}

impl BoundedQuality<[u64], u64> for DepthCount {
    fn touched(&self, data: &[u64]) -> Vec<u64> {
        let mut v: Vec<u64> = data.iter().map(|&x| self.prefix(x)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn fallback(&self) -> u64 {
        0
    }
}

fn ipp_scores(sorted_data: &[u64], candidates: &[u64]) -> Vec<f64> {
    candidates
        .iter()
        .map(|&z| f_ipp_sorted(sorted_data, z) as f64)
        .collect()
}

fn require_slice(taken: usize, needed: usize, context: &str) -> Result<()> {
    if taken < needed {
        return Err(Error::InsufficientData {
            context: context.to_string(),
            needed,
            available: taken,
        });
    }
    Ok(())
}

/// One recursion level. `svt` carries the gate threshold `3t/4 + rho` shared
/// across levels.
pub fn treelog<R: Rng + ?Sized>(
    universe: Universe,
    mut data: Vec<u64>,
    cfg: &IppConfig,
    svt: &mut SvtSession,
    rng: &mut R,
    trace: &mut Vec<LevelTrace>,
) -> Result<u64> {
    let bits = universe.bits();
    let n = data.len();
    let eps = cfg.epsilon;
    if universe.size() <= 8 {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        data.sort_unstable();
        let candidates: Vec<u64> = (0..=universe.max_element()).collect();
        let idx = exponential_mechanism_scores(&ipp_scores(&data, &candidates), eps, 1.0, rng)?;
        trace.push(LevelTrace {
            bits,
            n,
            route: LevelRoute::Base,
            gamma: None,
            slices: vec![],
        });
        return Ok(candidates[idx]);
    }

    let t = cfg.t;
    data.sort_unstable();
    let asc = ascending::<u64>();
    let desc = descending::<u64>();
    let mut session = RscSession::with_noise(data, cfg.noise, 3)?;
    let low = session.select_and_compute::<(), _>(SliceComputation::new(t, &asc), rng)?;
    require_slice(low.taken, t, "low border slice")?;
    let high = session.select_and_compute::<(), _>(SliceComputation::new(t, &desc), rng)?;
    require_slice(high.taken, t, "high border slice")?;

    // the remainder stays ascending through both border slices
    let path = heavy_path(session.remaining(), universe);
    if svt.query(path.gamma as f64, rng)? == SvtAnswer::Top {
        let z = one_heavy_round(session.remaining(), universe, t as f64, eps, rng)?;
        trace.push(LevelTrace {
            bits,
            n,
            route: LevelRoute::HeavyRound,
            gamma: Some(path.gamma),
            slices: vec![low.taken, high.taken],
        });
        return Ok(z);
    }

    let embed_map = EmbedOrder { universe };
    let deep =
        session.select_and_compute::<(), _>(SliceComputation::new(2 * t, &embed_map), rng)?;
    let leaf = path.leaf();
    let projected: Vec<u64> = session
        .remaining()
        .iter()
        .map(|&x| u64::from(level_label(x, leaf, bits) - 1))
        .collect();
    if projected.is_empty() {
        return Err(Error::InsufficientData {
            context: "data left for the embedded level".to_string(),
            needed: 1,
            available: 0,
        });
    }
    trace.push(LevelTrace {
        bits,
        n,
        route: LevelRoute::Recursed,
        gamma: Some(path.gamma),
        slices: vec![low.taken, high.taken, deep.taken],
    });

    let inner = Universe::for_count(u64::from(bits))?;
    let y = treelog(inner, projected, cfg, svt, rng, trace)?;
    let level = (y + 1).clamp(1, u64::from(bits)) as u32;

    // pick the depth-(level - 1) vertex holding the embed slice
    let depth = level - 1;
    let quality = DepthCount { bits, depth };
    let choose_beta = cfg.delta;
    let prefix = session.delayed_compute(deep.step, |s| {
        choosing_mechanism(&quality, s, s.len(), eps, cfg.delta, choose_beta, rng)
    })??;
    let v = universe.vertex(depth, prefix)?;
    let candidates = [v.lo(), v.hi(), v.left_right()];

    let mut border = session.delayed_compute(low.step, |s| s.to_vec())?;
    border.extend(session.delayed_compute(high.step, |s| s.to_vec())?);
    border.sort_unstable();
    let idx = exponential_mechanism_scores(&ipp_scores(&border, &candidates), eps, 1.0, rng)?;
    Ok(candidates[idx])
}

/// Full solver with trace: validates input, draws the shared gate noise and
/// runs the recursion.
pub fn ipp_with<R: Rng + ?Sized>(
    universe: Universe,
    data: Vec<u64>,
    cfg: &IppConfig,
    rng: &mut R,
) -> Result<IppOutcome> {
    universe.check(&data)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.enforce_regime {
        let required = cfg.regime(universe);
        if data.len() < required {
            return Err(Error::RegimeViolation {
                n: data.len(),
                required,
                inequality: format!(
                    "n >= 10 * t * log*|X| = 10 * {} * {}",
                    cfg.t,
                    log_star_universe(universe.bits())
                ),
            });
        }
    }
    let gate = 0.75 * cfg.t as f64;
    let mut svt =
        SvtSession::with_scales(gate, cfg.epsilon, 1.0 / cfg.epsilon, 1.0 / cfg.epsilon, rng)?;
    let mut levels = Vec::new();
    let value = treelog(universe, data, cfg, &mut svt, rng, &mut levels)?;
    Ok(IppOutcome { value, levels })
}

/// Interior point with standard parameters.
pub fn ipp<R: Rng + ?Sized>(
    universe: Universe,
    data: Vec<u64>,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<u64> {
    let cfg = IppConfig::new(epsilon, delta)?;
    ipp_with(universe, data, &cfg, rng).map(|o| o.value)
}
