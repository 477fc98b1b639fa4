use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{subtree_weight, TreeVertex, Universe};
use crate::error::{Error, Result};
use crate::mech::laplace;
use crate::rsc::OrderMap;

/// The greedy heavy path of a dataset and its balancedness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyPath {
    /// Root to leaf, `bits + 1` vertices.
    pub path: Vec<TreeVertex>,
    /// Max over the path of the lighter child's weight.
    pub gamma: usize,
}

impl HeavyPath {
    pub fn leaf(&self) -> u64 {
        self.path.last().expect("path is never empty").lo()
    }
}

/// Walks from the root to the heavier child (ties go left).
pub fn heavy_path(sorted: &[u64], universe: Universe) -> HeavyPath {
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let mut cur = universe.root();
    let mut path = Vec::with_capacity(universe.bits() as usize + 1);
    let mut gamma = 0;
    // restrict the search window as we descend
    let mut window = sorted;
    while !cur.is_leaf() {
        path.push(cur);
        let l = cur.left();
        let wl = subtree_weight(window, &l);
        let wr = window.len() - wl;
        gamma = gamma.max(wl.min(wr));
        if wl >= wr {
            window = &window[..wl];
            cur = l;
        } else {
            window = &window[wl..];
            cur = cur.right();
        }
    }
    path.push(cur);
    HeavyPath { path, gamma }
}

/// `Γ(D)` on ascending data.
pub fn gamma_sorted(sorted: &[u64], universe: Universe) -> usize {
    heavy_path(sorted, universe).gamma
}

/// `Γ(D)` on arbitrary data.
pub fn gamma(data: &[u64], universe: Universe) -> usize {
    gamma_sorted(&sorted_copy(data), universe)
}

/// True iff `|Γ(D) - Γ(D ∪ {x})| <= 1`.
pub fn gamma_sensitivity_check(data: &[u64], x: u64, universe: Universe) -> bool {
    let mut with = data.to_vec();
    with.push(x);
    gamma(data, universe).abs_diff(gamma(&with, universe)) <= 1
}

/// Label of `x` given the leaf of the heavy path: one more than the number of
/// leading bits `x` shares with the leaf, capped at `bits`.
pub fn level_label(x: u64, leaf: u64, bits: u32) -> u32 {
    let diff = x ^ leaf;
    if diff == 0 {
        return bits;
    }
    let agree = diff.leading_zeros() - (64 - bits);
    (agree + 1).min(bits)
}

/// Output of the embedding: `(label, element)` pairs sorted by label
/// descending, then element descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedList {
    pub pairs: Vec<(u32, u64)>,
    pub gamma: usize,
    pub path: Vec<TreeVertex>,
}

fn embed_key_cmp(a: &(u32, u64), b: &(u32, u64)) -> Ordering {
    b.cmp(a)
}

pub(crate) fn sorted_copy(data: &[u64]) -> Vec<u64> {
    let mut v = data.to_vec();
    v.sort_unstable();
    v
}

/// Labels every element by the level at which it leaves the heavy path.
pub fn embed(data: &[u64], universe: Universe) -> EmbeddedList {
    let sorted = sorted_copy(data);
    let hp = heavy_path(&sorted, universe);
    let leaf = hp.leaf();
    let mut pairs: Vec<(u32, u64)> = sorted
        .iter()
        .map(|&x| (level_label(x, leaf, universe.bits()), x))
        .collect();
    pairs.sort_unstable_by(embed_key_cmp);
    EmbeddedList {
        pairs,
        gamma: hp.gamma,
        path: hp.path,
    }
}

/// The embedding as an order on `X`: elements in the order of their
/// `(label, element)` pairs.
#[derive(Debug, Clone, Copy)]
pub struct EmbedOrder {
    pub universe: Universe,
}

impl OrderMap<u64> for EmbedOrder {
    fn name(&self) -> &str {
        "embed"
    }

    fn apply(&self, data: &[u64]) -> Vec<u64> {
        embed(data, self.universe)
            .pairs
            .into_iter()
            .map(|p| p.1)
            .collect()
    }

    fn take_prefix(&self, data: Vec<u64>, k: usize) -> (Vec<u64>, Vec<u64>) {
        let sorted = if data.windows(2).all(|w| w[0] <= w[1]) {
            data
        } else {
            let mut d = data;
            d.sort_unstable();
            d
        };
        let leaf = heavy_path(&sorted, self.universe).leaf();
        let bits = self.universe.bits();
        let mut keyed: Vec<(u32, u64)> = sorted
            .into_iter()
            .map(|x| (level_label(x, leaf, bits), x))
            .collect();
        if k < keyed.len() && k > 0 {
            keyed.select_nth_unstable_by(k, embed_key_cmp);
        }
        let k = k.min(keyed.len());
        let rest: Vec<u64> = keyed[k..].iter().map(|p| p.1).collect();
        keyed.truncate(k);
        keyed.sort_unstable_by(embed_key_cmp);
        (keyed.into_iter().map(|p| p.1).collect(), rest)
    }
}

/// Noisy heavy-path walk that stops at the first clearly balanced vertex and
/// returns the right-most leaf of its left child.
pub fn one_heavy_round<R: Rng + ?Sized>(
    data: &[u64],
    universe: Universe,
    t: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<u64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let owned;
    let sorted = if data.windows(2).all(|w| w[0] <= w[1]) {
        data
    } else {
        owned = sorted_copy(data);
        &owned
    };
    let rho = laplace(1.0 / epsilon, rng);
    let mut cur = universe.root();
    let mut window = sorted;
    while !cur.is_leaf() {
        let l = cur.left();
        let wl = subtree_weight(window, &l);
        let wr = window.len() - wl;
        let w_min = wl.min(wr) as f64;
        if w_min > t / 10.0 && w_min + laplace(1.0 / epsilon, rng) >= t / 4.0 + rho {
            return Ok(cur.left_right());
        }
        if wl >= wr {
            window = &window[..wl];
            cur = l;
        } else {
            window = &window[wl..];
            cur = cur.right();
        }
    }
    Ok(cur.lo())
}
