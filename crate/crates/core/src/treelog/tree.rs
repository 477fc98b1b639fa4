use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// The ordered domain `[0, 2^bits)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Universe {
    bits: u32,
}

impl Universe {
    pub fn new(bits: u32) -> Result<Self> {
        if !(1..=64).contains(&bits) {
            return Err(invalid("bits", format!("{bits} not in [1, 64]")));
        }
        Ok(Self { bits })
    }

    /// Smallest universe holding `count` distinct values (at least one bit).
    pub fn for_count(count: u64) -> Result<Self> {
        let bits = if count <= 2 {
            1
        } else {
            64 - (count - 1).leading_zeros()
        };
        Self::new(bits)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn size(&self) -> u128 {
        1u128 << self.bits
    }

    pub fn max_element(&self) -> u64 {
        (self.size() - 1) as u64
    }

    pub fn contains(&self, x: u64) -> bool {
        (x as u128) < self.size()
    }

    pub fn check(&self, data: &[u64]) -> Result<()> {
        match data.iter().find(|&&x| !self.contains(x)) {
            Some(&value) => Err(Error::OutOfRange {
                value,
                bits: self.bits,
            }),
            None => Ok(()),
        }
    }

    pub fn root(&self) -> TreeVertex {
        TreeVertex {
            depth: 0,
            prefix: 0,
            bits: self.bits,
        }
    }

    pub fn vertex(&self, depth: u32, prefix: u64) -> Result<TreeVertex> {
        if depth > self.bits {
            return Err(invalid("depth", format!("{depth} exceeds {}", self.bits)));
        }
        if (prefix as u128) >= (1u128 << depth) {
            return Err(invalid(
                "prefix",
                format!("{prefix} has more than {depth} bits"),
            ));
        }
        Ok(TreeVertex {
            depth,
            prefix,
            bits: self.bits,
        })
    }

    /// The leaf holding `x`.
    pub fn leaf(&self, x: u64) -> TreeVertex {
        TreeVertex {
            depth: self.bits,
            prefix: x,
            bits: self.bits,
        }
    }
}

/// A vertex of the implicit complete binary search tree over a universe.
/// `prefix` holds the top `depth` bits shared by the vertex's leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeVertex {
    pub depth: u32,
    pub prefix: u64,
    bits: u32,
}

impl TreeVertex {
    fn span_bits(&self) -> u32 {
        self.bits - self.depth
    }

    /// Left-most leaf.
    pub fn lo(&self) -> u64 {
        ((self.prefix as u128) << self.span_bits()) as u64
    }

    /// Right-most leaf.
    pub fn hi(&self) -> u64 {
        ((((self.prefix as u128) + 1) << self.span_bits()) - 1) as u64
    }

    /// Right-most leaf under the left child. Undefined for leaves, where it
    /// returns the leaf itself.
    pub fn left_right(&self) -> u64 {
        if self.is_leaf() {
            return self.lo();
        }
        self.left().hi()
    }

    pub fn is_leaf(&self) -> bool {
        self.depth == self.bits
    }

    pub fn left(&self) -> TreeVertex {
        debug_assert!(!self.is_leaf());
        TreeVertex {
            depth: self.depth + 1,
            prefix: self.prefix << 1,
            bits: self.bits,
        }
    }

    pub fn right(&self) -> TreeVertex {
        debug_assert!(!self.is_leaf());
        TreeVertex {
            depth: self.depth + 1,
            prefix: (self.prefix << 1) | 1,
            bits: self.bits,
        }
    }

    pub fn contains(&self, x: u64) -> bool {
        x >= self.lo() && x <= self.hi()
    }
}

/// Number of elements of `sorted` inside the vertex's interval.
pub fn subtree_weight(sorted: &[u64], v: &TreeVertex) -> usize {
    let (lo, hi) = (v.lo(), v.hi());
    sorted.partition_point(|&x| x <= hi) - sorted.partition_point(|&x| x < lo)
}

/// `min(#{x <= z}, #{x >= z})` on ascending data.
pub fn f_ipp_sorted(sorted: &[u64], z: u64) -> usize {
    let le = sorted.partition_point(|&x| x <= z);
    let ge = sorted.len() - sorted.partition_point(|&x| x < z);
    le.min(ge)
}

/// `min(#{x <= z}, #{x >= z})` on arbitrary data.
pub fn f_ipp(data: &[u64], z: u64) -> usize {
    let le = data.iter().filter(|&&x| x <= z).count();
    let ge = data.iter().filter(|&&x| x >= z).count();
    le.min(ge)
}

/// Iterated base-2 logarithm: how many applications of `log2` bring `x` to
/// at most 1.
pub fn log_star(mut x: f64) -> u32 {
    let mut n = 0;
    while x > 1.0 {
        x = x.log2();
        n += 1;
    }
    n
}

/// `log*` of a universe size `2^bits`.
pub fn log_star_universe(bits: u32) -> u32 {
    1 + log_star(bits as f64)
}

/// True when `min(data) <= z <= max(data)`.
pub fn is_interior(data: &[u64], z: u64) -> bool {
    match (data.iter().min(), data.iter().max()) {
        (Some(&lo), Some(&hi)) => lo <= z && z <= hi,
        _ => false,
    }
}
