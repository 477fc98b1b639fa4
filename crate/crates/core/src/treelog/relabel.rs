//! Relabelling checks for the embedding step.
//!
//! For neighbouring inputs whose heavy paths are unbalanced (`Γ < t`), the
//! two embedded lists differ only in their deepest entries. Relabelling the
//! first `2t` entries of one list with the other input's heavy path must make
//! the lists neighbours (plain adjacency) or keep their projections close
//! (cumulative adjacency).

use super::embed::{embed, heavy_path, level_label, sorted_copy};
use super::tree::Universe;

/// True when `longer` equals `shorter` with exactly one element inserted
/// (both taken as multisets).
pub fn is_insertion<T: Ord + Clone>(shorter: &[T], longer: &[T]) -> bool {
    if longer.len() != shorter.len() + 1 {
        return false;
    }
    let mut a = shorter.to_vec();
    let mut b = longer.to_vec();
    a.sort();
    b.sort();
    let mut i = 0;
    let mut skipped = false;
    for y in &b {
        if i < a.len() && a[i] == *y {
            i += 1;
        } else if skipped {
            return false;
        } else {
            skipped = true;
        }
    }
    i == a.len()
}

/// `embed(data)` with its first `cut` entries relabelled against the heavy
/// path of `reference`, re-sorted in embedding order.
pub fn relabel_prefix(
    data: &[u64],
    reference: &[u64],
    cut: usize,
    universe: Universe,
) -> Vec<(u32, u64)> {
    let leaf = heavy_path(&sorted_copy(reference), universe).leaf();
    let bits = universe.bits();
    let mut pairs = embed(data, universe).pairs;
    for p in pairs.iter_mut().take(cut) {
        p.0 = level_label(p.1, leaf, bits);
    }
    pairs.sort_unstable_by(|a, b| b.cmp(a));
    pairs
}

/// Relabelled `embed(data)` is a one-insertion neighbour of
/// `embed(data ∪ {x})`.
pub fn first_2t_relabel_adjacent(data: &[u64], x: u64, t: usize, universe: Universe) -> bool {
    let mut larger = data.to_vec();
    larger.push(x);
    let relabelled = relabel_prefix(data, &larger, 2 * t, universe);
    let target = embed(&larger, universe).pairs;
    is_insertion(&relabelled, &target)
}

/// Largest gap between `#{label <= y}` counts of two equal-size label lists.
fn label_distance(a: &[u32], b: &[u32], bits: u32) -> usize {
    let hist = |v: &[u32]| {
        let mut h = vec![0i64; bits as usize + 1];
        for &l in v {
            h[l as usize] += 1;
        }
        h
    };
    let (ha, hb) = (hist(a), hist(b));
    let mut gap = 0i64;
    let mut worst = 0;
    for y in 0..=bits as usize {
        gap += ha[y] - hb[y];
        worst = worst.max(gap.unsigned_abs() as usize);
    }
    worst
}

/// Cumulative check for equal-size `a` and `b`: relabels the first `2t`
/// entries of `embed(a)` against `b`'s heavy path and returns the cumulative
/// distance between the label projections, over the full lists and over the
/// remainders after the `2t`-slice.
pub fn relabelled_projection_distance(
    a: &[u64],
    b: &[u64],
    t: usize,
    universe: Universe,
) -> (usize, usize) {
    let bits = universe.bits();
    let ra: Vec<u32> = relabel_prefix(a, b, 2 * t, universe)
        .iter()
        .map(|p| p.0)
        .collect();
    let rb: Vec<u32> = embed(b, universe).pairs.iter().map(|p| p.0).collect();
    let cut = (2 * t).min(ra.len());
    (
        label_distance(&ra, &rb, bits),
        label_distance(&ra[cut..], &rb[cut..], bits),
    )
}
