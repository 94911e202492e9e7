//! Address arithmetic on the tree of M-adic cubes in the non-negative orthant.
//!
//! A [`Block`] of scale `j` with index `m` is the half-open cube with corner
//! `m * M^j` and side length `M^j`. Blocks of one scale tile the orthant, and
//! two blocks overlap only when one contains the other, so the blocks form an
//! `M^d`-ary tree oriented toward decreasing scales.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Dimension and subdivision parameter of the cube hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    dim: usize,
    base: u32,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { dim: 1, base: 2 }
    }
}

impl Geometry {
    pub fn new(dim: usize, base: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if base < 2 {
            return Err(Error::Domain("subdivision parameter must be at least 2".into()));
        }
        Ok(Self { dim, base })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    /// Number of children of every block, `M^d`.
    pub fn branching(&self) -> f64 {
        (self.base as f64).powi(self.dim as i32)
    }

    /// `M^(d*j)` as a float; the volume of a scale-`j` block.
    pub fn volume(&self, scale: i64) -> f64 {
        self.branching().powf(scale as f64)
    }

    /// The cube `[0, M^j)^d`.
    pub fn origin_block(&self, scale: i64) -> Block {
        Block::new(scale, vec![0; self.dim])
    }

    fn check(&self, b: &Block) -> Result<()> {
        if b.index.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: b.index.len() });
        }
        Ok(())
    }

    /// The unique block one scale up that contains `b`.
    pub fn parent(&self, b: &Block) -> Result<Block> {
        self.check(b)?;
        let scale = b
            .scale
            .checked_add(1)
            .ok_or_else(|| Error::Range(format!("scale overflow above {}", b.scale)))?;
        let m = self.base as u128;
        Ok(Block { scale, index: b.index.iter().map(|&i| i / m).collect() })
    }

    /// The ancestor of `b` at `scale` (`b` itself when the scales agree).
    pub fn ancestor_at(&self, b: &Block, scale: i64) -> Result<Block> {
        self.check(b)?;
        if scale < b.scale {
            return Err(Error::Domain(format!(
                "no ancestor of {b} at lower scale {scale}"
            )));
        }
        let mut index = b.index.clone();
        let m = self.base as u128;
        for _ in b.scale..scale {
            let mut all_zero = true;
            for i in index.iter_mut() {
                *i /= m;
                all_zero &= *i == 0;
            }
            if all_zero {
                break;
            }
        }
        Ok(Block { scale, index })
    }

    /// The `M^d` blocks one scale below `b`, first coordinate varying fastest.
    pub fn children(&self, b: &Block) -> Result<Vec<Block>> {
        self.check(b)?;
        let scale = b
            .scale
            .checked_sub(1)
            .ok_or_else(|| Error::Range(format!("scale overflow below {}", b.scale)))?;
        let m = self.base as u128;
        let mut base_index = Vec::with_capacity(self.dim);
        for &i in &b.index {
            let v = i
                .checked_mul(m)
                .ok_or_else(|| Error::Range(format!("child index of {b} exceeds u128")))?;
            // the largest offset must also fit
            v.checked_add(m - 1)
                .ok_or_else(|| Error::Range(format!("child index of {b} exceeds u128")))?;
            base_index.push(v);
        }
        let count = (self.base as usize).pow(self.dim as u32);
        let mut out = Vec::with_capacity(count);
        for c in 0..count {
            let mut rest = c;
            let mut index = base_index.clone();
            for slot in index.iter_mut() {
                *slot += (rest % self.base as usize) as u128;
                rest /= self.base as usize;
            }
            out.push(Block { scale, index });
        }
        Ok(out)
    }

    /// Whether `inner` lies inside `outer` (reflexive).
    pub fn contains(&self, outer: &Block, inner: &Block) -> bool {
        if outer.index.len() != inner.index.len() || outer.scale < inner.scale {
            return false;
        }
        match self.ancestor_at(inner, outer.scale) {
            Ok(a) => a == *outer,
            Err(_) => false,
        }
    }

    /// Whether the two cubes intersect; for this tree that means nested.
    pub fn overlaps(&self, a: &Block, b: &Block) -> bool {
        self.contains(a, b) || self.contains(b, a)
    }

    /// Lowest scale at which a single block covers both arguments.
    pub fn lcs(&self, a: &Block, b: &Block) -> Result<i64> {
        self.check(a)?;
        self.check(b)?;
        let top = a.scale.max(b.scale);
        let mut x = self.ancestor_at(a, top)?;
        let mut y = self.ancestor_at(b, top)?;
        let mut scale = top;
        while x != y {
            x = self.parent(&x)?;
            y = self.parent(&y)?;
            scale += 1;
        }
        Ok(scale)
    }

    /// The smallest block containing both arguments.
    pub fn lowest_common_block(&self, a: &Block, b: &Block) -> Result<Block> {
        let s = self.lcs(a, b)?;
        self.ancestor_at(a, s)
    }

    /// Ultrametric `M^(d*lcs)`, zero on the diagonal.
    pub fn hierarchical_distance(&self, a: &Block, b: &Block) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        Ok(self.volume(self.lcs(a, b)?))
    }

    /// Side length `M^j` of a scale-`j` block.
    pub fn side(&self, scale: i64) -> f64 {
        (self.base as f64).powf(scale as f64)
    }

    /// Lower corner of `b` in real coordinates.
    pub fn corner(&self, b: &Block) -> Vec<f64> {
        let s = self.side(b.scale);
        b.index.iter().map(|&i| i as f64 * s).collect()
    }

    /// Whether `b` is a block of this geometry (index length matches `d`).
    pub fn admits(&self, b: &Block) -> bool {
        b.index.len() == self.dim
    }
}

/// A cube of the hierarchy. Ordered by scale, then lexicographically by index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    pub scale: i64,
    pub index: Vec<u128>,
}

impl Block {
    pub fn new(scale: i64, index: Vec<u128>) -> Self {
        Self { scale, index }
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }
}

impl Ord for Block {
    fn cmp(&self, other: &Self) -> Ordering {
        self.scale.cmp(&other.scale).then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialOrd for Block {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:(", self.scale)?;
        for (k, i) in self.index.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("expected block notation j:(m1,...,md), got {s:?}"));
        let (scale, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let scale: i64 = scale.trim().parse().map_err(|_| bad())?;
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let index = inner
            .split(',')
            .map(|p| p.trim().parse::<u128>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        if index.is_empty() {
            return Err(bad());
        }
        Ok(Block { scale, index })
    }
}

impl Serialize for Block {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Block {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(scale: i64, idx: &[u128]) -> Block {
        Block::new(scale, idx.to_vec())
    }

    #[test]
    fn parent_examples() {
        let g1 = Geometry::new(1, 2).unwrap();
        assert_eq!(g1.parent(&b(0, &[3])).unwrap(), b(1, &[1]));
        let g2 = Geometry::new(2, 2).unwrap();
        assert_eq!(g2.parent(&b(-1, &[0, 0])).unwrap(), b(0, &[0, 0]));
        let g3 = Geometry::new(1, 3).unwrap();
        assert_eq!(g3.parent(&b(2, &[7])).unwrap(), b(3, &[2]));
    }

    #[test]
    fn children_examples() {
        let g1 = Geometry::new(1, 2).unwrap();
        assert_eq!(g1.children(&b(1, &[1])).unwrap(), vec![b(0, &[2]), b(0, &[3])]);
        let g2 = Geometry::new(2, 2).unwrap();
        assert_eq!(
            g2.children(&b(0, &[0, 0])).unwrap(),
            vec![b(-1, &[0, 0]), b(-1, &[1, 0]), b(-1, &[0, 1]), b(-1, &[1, 1])]
        );
    }

    #[test]
    fn children_overflow_is_range_error() {
        let g = Geometry::new(1, 2).unwrap();
        let err = g.children(&b(0, &[u128::MAX / 2 + 1])).unwrap_err();
        assert!(matches!(err, Error::Range(_)));
        assert!(matches!(g.parent(&b(i64::MAX, &[0])), Err(Error::Range(_))));
    }

    #[test]
    fn contains_examples() {
        let g = Geometry::new(1, 2).unwrap();
        assert!(g.contains(&b(0, &[0]), &b(-2, &[0])));
        assert!(!g.contains(&b(-1, &[0]), &b(-1, &[1])));
        assert!(g.contains(&b(3, &[5]), &b(3, &[5])));
        assert!(!g.contains(&b(-2, &[0]), &b(0, &[0])));
    }

    #[test]
    fn lcs_and_distance_examples() {
        let g = Geometry::new(1, 2).unwrap();
        assert_eq!(g.lcs(&b(-2, &[0]), &b(-2, &[2])).unwrap(), 0);
        assert_eq!(g.lcs(&b(0, &[0]), &b(0, &[1])).unwrap(), 1);
        assert_eq!(g.lcs(&b(-3, &[5]), &b(-3, &[5])).unwrap(), -3);
        assert_eq!(g.hierarchical_distance(&b(-2, &[0]), &b(-2, &[2])).unwrap(), 1.0);
        assert_eq!(g.hierarchical_distance(&b(4, &[1]), &b(4, &[1])).unwrap(), 0.0);
        let g2 = Geometry::new(2, 2).unwrap();
        assert_eq!(g2.hierarchical_distance(&b(0, &[0, 0]), &b(0, &[1, 0])).unwrap(), 4.0);
    }

    #[test]
    fn notation_round_trip() {
        let x: Block = "-3:(4,0,7)".parse().unwrap();
        assert_eq!(x, b(-3, &[4, 0, 7]));
        assert_eq!(x.to_string(), "-3:(4,0,7)");
        assert!("3:4,0".parse::<Block>().is_err());
        assert!("x:(1)".parse::<Block>().is_err());
        let json = serde_json::to_string(&x).unwrap();
        assert_eq!(json, "\"-3:(4,0,7)\"");
    }

    #[test]
    fn ordering_is_scale_then_index() {
        let mut v = vec![b(0, &[1]), b(-1, &[3]), b(0, &[0])];
        v.sort();
        assert_eq!(v, vec![b(-1, &[3]), b(0, &[0]), b(0, &[1])]);
    }

    #[test]
    fn invalid_geometry() {
        assert!(Geometry::new(0, 2).is_err());
        assert!(Geometry::new(2, 1).is_err());
    }
}
