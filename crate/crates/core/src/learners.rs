//! Private learners for thresholds and axis-aligned rectangles.
//!
//! The threshold learner reduces to one interior point query on the points
//! around the decision boundary. The rectangle learner runs a single slicing
//! session over the positive examples with two slices per axis and solves an
//! interior point problem on each slice's projection.

use std::cmp::Ordering;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mech::laplace;
use crate::rsc::{OrderMap, RscSession, SliceComputation, SliceNoise, SortOrder};
use crate::treelog::{ipp_with, IppConfig, Universe};

/// Labelled points in `X^dims`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub dims: usize,
    pub coords: Vec<u64>,
    pub labels: Vec<bool>,
}

impl LabeledSample {
    pub fn new(dims: usize, coords: Vec<u64>, labels: Vec<bool>) -> Result<Self> {
        if dims == 0 || dims > 16 {
            return Err(invalid("dims", format!("{dims} not in [1, 16]")));
        }
        if coords.len() != dims * labels.len() {
            return Err(Error::SizeMismatch {
                left: coords.len(),
                right: dims * labels.len(),
            });
        }
        Ok(Self {
            dims,
            coords,
            labels,
        })
    }

    /// One-dimensional sample.
    pub fn line(points: Vec<(u64, bool)>) -> Self {
        let (coords, labels) = points.into_iter().unzip();
        Self {
            dims: 1,
            coords,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn point(&self, i: usize) -> &[u64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    /// Reads CSV rows `c_1,...,c_d,label` (label 0/1). A header row is
    /// skipped if present; all rows must have the same width.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| invalid("input", e.to_string()))?;
        let mut dims = None;
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| invalid("input", format!("line {}: {e}", line + 1)))?;
            let parsed: std::result::Result<Vec<u64>, _> =
                rec.iter().map(str::parse::<u64>).collect();
            let Ok(values) = parsed else {
                if line == 0 {
                    continue;
                }
                return Err(invalid(
                    "input",
                    format!("line {}: malformed row", line + 1),
                ));
            };
            if values.len() < 2 {
                return Err(invalid(
                    "input",
                    format!("line {}: need coordinates and a label", line + 1),
                ));
            }
            let d = values.len() - 1;
            if *dims.get_or_insert(d) != d {
                return Err(invalid(
                    "input",
                    format!("line {}: expected {} coordinates", line + 1, dims.unwrap()),
                ));
            }
            let label = match values[d] {
                0 => false,
                1 => true,
                other => {
                    return Err(invalid(
                        "input",
                        format!("line {}: label {other} is not 0/1", line + 1),
                    ))
                }
            };
            coords.extend_from_slice(&values[..d]);
            labels.push(label);
        }
        Self::new(dims.ok_or(Error::EmptyDataset)?, coords, labels)
    }

    pub fn check_universe(&self, universe: Universe) -> Result<()> {
        universe.check(&self.coords)
    }
}

/// `x -> [x <= cut]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    pub cut: u64,
}

impl Threshold {
    pub fn classify(&self, x: u64) -> bool {
        x <= self.cut
    }
}

/// Points per side handed to the interior point solver.
pub fn threshold_side_size(universe: Universe, epsilon: f64, delta: f64) -> Result<usize> {
    Ok(IppConfig::new(epsilon, delta)?.regime(universe).div_ceil(2))
}

/// Sample size at which the learner targets error `xi` with probability
/// `1 - beta`: `ceil((4 s + 8 ln(2/beta)) / xi)` for `s` points per side.
pub fn threshold_sample_size(
    universe: Universe,
    xi: f64,
    beta: f64,
    epsilon: f64,
    delta: f64,
) -> Result<usize> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(invalid("xi", format!("{xi} not in (0, 1)")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid("beta", format!("{beta} not in (0, 1)")));
    }
    let side = threshold_side_size(universe, epsilon, delta)? as f64;
    Ok(((4.0 * side + 8.0 * (2.0 / beta).ln()) / xi).ceil() as usize)
}

/// Realizable private threshold learning.
///
/// When either side has too few (noisy) points, the constant hypothesis of
/// the larger side is returned: `max X` for positives, 0 for negatives. Otherwise the solver runs on the largest
/// positives together with the smallest negatives.
pub fn learn_threshold<R: Rng + ?Sized>(
    sample: &LabeledSample,
    universe: Universe,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<Threshold> {
    if sample.dims != 1 {
        return Err(invalid(
            "dims",
            "threshold learning needs one-dimensional points",
        ));
    }
    sample.check_universe(universe)?;
    let cfg = IppConfig::new(epsilon, delta)?;
    let mut pos: Vec<u64> = Vec::new();
    let mut neg: Vec<u64> = Vec::new();
    for (&x, &l) in sample.coords.iter().zip(&sample.labels) {
        if l {
            pos.push(x);
        } else {
            neg.push(x);
        }
    }
    let max_pos = pos.iter().max();
    let min_neg = neg.iter().min();
    if let (Some(p), Some(n)) = (max_pos, min_neg) {
        if p >= n {
            return Err(Error::NotRealizable);
        }
    }
    let side = cfg.regime(universe).div_ceil(2);
    let noisy_neg = neg.len() as f64 + laplace(1.0 / epsilon, rng);
    let noisy_pos = pos.len() as f64 + laplace(1.0 / epsilon, rng);
    if noisy_neg.min(noisy_pos) < side as f64 {
        let cut = if noisy_pos >= noisy_neg {
            universe.max_element()
        } else {
            0
        };
        return Ok(Threshold { cut });
    }
    let window = boundary_window(pos, neg, side);
    let out = ipp_with(universe, window, &cfg.permissive(), rng)?;
    Ok(Threshold { cut: out.value })
}

/// The `side` largest positives and `side` smallest negatives.
pub fn boundary_window(mut pos: Vec<u64>, mut neg: Vec<u64>, side: usize) -> Vec<u64> {
    let kp = side.min(pos.len());
    let kn = side.min(neg.len());
    if kp > 0 && kp < pos.len() {
        pos.select_nth_unstable_by(kp - 1, |a, b| b.cmp(a));
    }
    if kn > 0 && kn < neg.len() {
        neg.select_nth_unstable(kn - 1);
    }
    pos.truncate(kp);
    neg.truncate(kn);
    pos.extend(neg);
    pos
}

/// A product of closed intervals; empty means the all-negative hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rectangle {
    pub intervals: Vec<(u64, u64)>,
}

impl Rectangle {
    pub fn all_negative() -> Self {
        Self {
            intervals: Vec::new(),
        }
    }

    pub fn is_all_negative(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, point: &[u64]) -> bool {
        !self.intervals.is_empty()
            && self
                .intervals
                .iter()
                .zip(point)
                .all(|(&(a, b), &x)| a <= x && x <= b)
    }
}

/// Positives the rectangle learner needs: `2d` slices of the solver's regime
/// size plus room for the slice noise.
pub fn rectangle_positive_size(
    dims: usize,
    universe: Universe,
    epsilon: f64,
    delta: f64,
) -> Result<usize> {
    let m = IppConfig::new(epsilon, delta)?.regime(universe);
    let slack = ((2 * dims) as f64 / delta).ln() / epsilon;
    Ok(2 * dims * (m + slack.ceil() as usize))
}

/// Positives at which each of the `2d` slices covers about a `xi / (2d)`
/// fraction, so the learned box misses at most about `xi` of the positive
/// mass: `ceil(rectangle_positive_size / xi)`.
pub fn rectangle_sample_size(
    dims: usize,
    universe: Universe,
    xi: f64,
    epsilon: f64,
    delta: f64,
) -> Result<usize> {
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(invalid("xi", format!("{xi} not in (0, 1]")));
    }
    Ok((rectangle_positive_size(dims, universe, epsilon, delta)? as f64 / xi).ceil() as usize)
}

/// Compares point indices by coordinate `axis`, then the remaining
/// coordinates in order, then the index.
pub fn axis_cmp(coords: &[u64], dims: usize, axis: usize, a: u32, b: u32) -> Ordering {
    let pa = &coords[a as usize * dims..(a as usize + 1) * dims];
    let pb = &coords[b as usize * dims..(b as usize + 1) * dims];
    pa[axis]
        .cmp(&pb[axis])
        .then_with(|| {
            (0..dims)
                .filter(|&j| j != axis)
                .map(|j| pa[j].cmp(&pb[j]))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then(a.cmp(&b))
}

/// Diagnostics from one rectangle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleRun {
    pub rectangle: Rectangle,
    pub positives: usize,
    /// Slice sizes in session order (low and high per axis).
    pub slices: Vec<usize>,
}

/// Private rectangle learning with one slicing session of `2d` steps.
pub fn learn_rectangle<R: Rng + ?Sized>(
    sample: &LabeledSample,
    universe: Universe,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<RectangleRun> {
    sample.check_universe(universe)?;
    let dims = sample.dims;
    let cfg = IppConfig::new(epsilon, delta)?;
    let m = cfg.regime(universe);
    let positives: Vec<u32> = (0..sample.len() as u32)
        .filter(|&i| sample.labels[i as usize])
        .collect();
    let npos = positives.len();
    let needed = rectangle_positive_size(dims, universe, epsilon, delta)?;
    if npos as f64 + laplace(1.0 / epsilon, rng) < needed as f64 {
        return Ok(RectangleRun {
            rectangle: Rectangle::all_negative(),
            positives: npos,
            slices: Vec::new(),
        });
    }
    let coords = sample.coords.as_slice();
    let mut session =
        RscSession::with_noise(positives, SliceNoise::Geometric { epsilon }, 2 * dims)?;
    let mut intervals = Vec::with_capacity(dims);
    let mut slices = Vec::with_capacity(2 * dims);
    for axis in 0..dims {
        let low = SortOrder::new(format!("axis-{axis}-ascending"), move |a: &u32, b: &u32| {
            axis_cmp(coords, dims, axis, *a, *b)
        });
        let high = SortOrder::new(
            format!("axis-{axis}-descending"),
            move |a: &u32, b: &u32| axis_cmp(coords, dims, axis, *b, *a),
        );
        let mut ends = [0u64; 2];
        let maps: [&(dyn OrderMap<u32> + Sync); 2] = [&low, &high];
        for (end, map) in ends.iter_mut().zip(maps) {
            let out = session.select_and_compute::<(), _>(SliceComputation::new(m, map), rng)?;
            if out.taken < m {
                return Err(Error::InsufficientData {
                    context: format!("axis {axis} slice"),
                    needed: m,
                    available: out.taken,
                });
            }
            slices.push(out.taken);
            let projected = session.delayed_compute(out.step, |s| {
                s.iter()
                    .map(|&i| coords[i as usize * dims + axis])
                    .collect::<Vec<u64>>()
            })?;
            *end = ipp_with(universe, projected, &cfg, rng)?.value;
        }
        intervals.push((ends[0].min(ends[1]), ends[0].max(ends[1])));
    }
    Ok(RectangleRun {
        rectangle: Rectangle { intervals },
        positives: npos,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn non_realizable_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = Universe::new(8).unwrap();
        let s = LabeledSample::line(vec![(5, true), (3, false)]);
        assert_eq!(
            learn_threshold(&s, u, 1.0, 1e-3, &mut rng),
            Err(Error::NotRealizable)
        );
    }

    #[test]
    fn all_positive_gives_max_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Universe::new(8).unwrap();
        let s = LabeledSample::line((0..1000).map(|i| (i % 256, true)).collect());
        assert_eq!(
            learn_threshold(&s, u, 1.0, 1e-3, &mut rng).unwrap().cut,
            255
        );
    }

    #[test]
    fn window_takes_boundary_points() {
        let w = boundary_window(vec![1, 9, 4, 7], vec![20, 12, 30], 2);
        let mut w = w;
        w.sort();
        assert_eq!(w, vec![7, 9, 12, 20]);
    }

    #[test]
    fn axis_order_breaks_ties() {
        let coords = [3, 1, 3, 0, 2, 9];
        assert_eq!(axis_cmp(&coords, 2, 0, 0, 1), Ordering::Greater);
        assert_eq!(axis_cmp(&coords, 2, 0, 2, 0), Ordering::Less);
        assert_eq!(axis_cmp(&coords, 2, 1, 0, 0), Ordering::Equal);
    }

    #[test]
    fn few_positives_give_empty_rectangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Universe::new(8).unwrap();
        let s = LabeledSample::new(2, vec![1, 1, 2, 2], vec![true, false]).unwrap();
        let run = learn_rectangle(&s, u, 1.0, 1e-3, &mut rng).unwrap();
        assert!(run.rectangle.is_all_negative());
        assert!(!run.rectangle.contains(&[1, 1]));
    }
}
