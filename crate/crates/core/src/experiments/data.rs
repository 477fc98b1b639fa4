//! Dataset loading and synthetic generators.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::learners::LabeledSample;
use crate::treelog::Universe;

/// Reads newline-delimited decimal integers. Blank lines are skipped and
/// duplicates kept.
pub fn load_dataset(path: &Path, universe: Universe) -> Result<Vec<u64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid("input", format!("{}: {e}", path.display())))?;
    parse_dataset(&text, universe)
}

pub fn parse_dataset(text: &str, universe: Universe) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: u64 = line.parse().map_err(|_| {
            invalid(
                "input",
                format!("line {}: `{line}` is not an unsigned integer", i + 1),
            )
        })?;
        if !universe.contains(x) {
            return Err(invalid(
                "input",
                format!(
                    "line {}: {x} does not fit in {} bits",
                    i + 1,
                    universe.bits()
                ),
            ));
        }
        out.push(x);
    }
    Ok(out)
}

/// Synthetic dataset shapes for interior point experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    AllEqual,
    TwoExtremes,
    Uniform,
    GeometricClustered,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::AllEqual,
        Family::TwoExtremes,
        Family::Uniform,
        Family::GeometricClustered,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::AllEqual => "all-equal",
            Family::TwoExtremes => "two-extremes",
            Family::Uniform => "uniform-random",
            Family::GeometricClustered => "geometric-clustered",
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, universe: Universe, n: usize, rng: &mut R) -> Vec<u64> {
        let top = universe.max_element();
        let bits = universe.bits();
        match self {
            Family::AllEqual => vec![rng.random_range(0..=top); n],
            Family::TwoExtremes => (0..n).map(|i| if i % 2 == 0 { 0 } else { top }).collect(),
            Family::Uniform => (0..n).map(|_| rng.random_range(0..=top)).collect(),
            Family::GeometricClustered => (0..n)
                .map(|_| {
                    // cluster around 2^k with spread 2^(k/2)
                    let k = rng.random_range(0..bits);
                    let spread = 1u64 << (k / 2);
                    (1u64 << k) | rng.random_range(0..spread)
                })
                .collect(),
        }
    }
}

/// Planted box: positives uniform inside a random box, negatives uniform
/// outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBox {
    pub universe: Universe,
    pub intervals: Vec<(u64, u64)>,
}

impl PlantedBox {
    /// Each side spans between a quarter and a half of the axis and keeps a
    /// margin of at least an eighth from both ends.
    pub fn random<R: Rng + ?Sized>(universe: Universe, dims: usize, rng: &mut R) -> Self {
        let size = universe.max_element() as u128 + 1;
        let eighth = (size / 8) as u64;
        let intervals = (0..dims)
            .map(|_| {
                let lo = rng.random_range(eighth..2 * eighth);
                let len = rng.random_range(2 * eighth..4 * eighth);
                (lo, lo + len)
            })
            .collect();
        Self {
            universe,
            intervals,
        }
    }

    pub fn contains(&self, p: &[u64]) -> bool {
        self.intervals
            .iter()
            .zip(p)
            .all(|(&(a, b), &x)| a <= x && x <= b)
    }

    pub fn positive<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        self.intervals
            .iter()
            .map(|&(a, b)| rng.random_range(a..=b))
            .collect()
    }

    pub fn negative<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let top = self.universe.max_element();
        loop {
            let p: Vec<u64> = self
                .intervals
                .iter()
                .map(|_| rng.random_range(0..=top))
                .collect();
            if !self.contains(&p) {
                return p;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        positives: usize,
        negatives: usize,
        rng: &mut R,
    ) -> LabeledSample {
        let dims = self.intervals.len();
        let mut coords = Vec::with_capacity((positives + negatives) * dims);
        for _ in 0..positives {
            coords.extend(self.positive(rng));
        }
        for _ in 0..negatives {
            coords.extend(self.negative(rng));
        }
        let mut labels = vec![true; positives];
        labels.resize(positives + negatives, false);
        LabeledSample {
            dims,
            coords,
            labels,
        }
    }
}

/// Uniform points on `[0, 2^bits)` labelled by `x <= cut`.
pub fn threshold_sample<R: Rng + ?Sized>(
    universe: Universe,
    cut: u64,
    n: usize,
    rng: &mut R,
) -> LabeledSample {
    let top = universe.max_element();
    LabeledSample::line(
        (0..n)
            .map(|_| {
                let x = rng.random_range(0..=top);
                (x, x <= cut)
            })
            .collect(),
    )
}
