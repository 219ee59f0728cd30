//! Subsets of `{1, ..., d}` as bit masks, binomials and finite differences.
//!
//! Component `k` (1-based) lives in bit `k - 1`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 30;

pub fn check_dim(dim: usize) -> Result<()> {
    if dim > MAX_DIM {
        return Err(Error::DimensionTooLarge { dim, max: MAX_DIM });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsetMask {
    bits: u32,
    dim: usize,
}

impl SubsetMask {
    pub fn new(bits: u32, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if (bits as u64) >= (1u64 << dim) {
            return Err(Error::IndexOutOfRange {
                what: format!("mask {bits} has components beyond dimension {dim}"),
            });
        }
        Ok(SubsetMask { bits, dim })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim)
    }

    pub fn full(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(SubsetMask { bits: full_bits(dim), dim })
    }

    /// Builds a mask from 1-based component labels.
    pub fn from_components(components: &[usize], dim: usize) -> Result<Self> {
        let mut bits = 0u32;
        for &c in components {
            if c == 0 || c > dim {
                return Err(Error::IndexOutOfRange {
                    what: format!("component {c} in dimension {dim}"),
                });
            }
            bits |= 1 << (c - 1);
        }
        Self::new(bits, dim)
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn dim(self) -> usize {
        self.dim
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    /// Membership of the 1-based component `k`.
    pub fn contains(self, k: usize) -> bool {
        k >= 1 && k <= self.dim && self.bits & (1 << (k - 1)) != 0
    }

    pub fn complement(self) -> Self {
        SubsetMask { bits: full_bits(self.dim) & !self.bits, dim: self.dim }
    }

    /// 1-based components in ascending order.
    pub fn components(self) -> Vec<usize> {
        (1..=self.dim).filter(|&k| self.contains(k)).collect()
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.components().iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

pub fn full_bits(dim: usize) -> u32 {
    if dim == 0 {
        0
    } else {
        (((1u64) << dim) - 1) as u32
    }
}

/// A non-empty list of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSeq(Vec<f64>);

impl RealSeq {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooShort { min: 1, len: 0 });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSequence {
                reason: format!("entry {i} is not finite"),
            });
        }
        Ok(RealSeq(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Exact binomial coefficient; panics on overflow, which does not happen for `n <= 60`.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Alternating binomial difference of order `j` at offset `k`.
pub fn difference(x: &[f64], j: usize, k: usize) -> Result<f64> {
    if k + j >= x.len() {
        return Err(Error::IndexOutOfRange {
            what: format!("difference order {j} at offset {k} needs {} entries, have {}", k + j + 1, x.len()),
        });
    }
    Ok(difference_unchecked(x, j, k))
}

pub(crate) fn difference_unchecked(x: &[f64], j: usize, k: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..=j {
        let c = binomial(j as u64, i as u64) as f64;
        let term = c * x[k + i];
        if i % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

/// Ascending sort of counts with a stable, 0-based permutation.
///
/// `perm[i]` is the original position of the `i`-th smallest entry; ties keep
/// their original order.
pub fn order_stats(n: &[u64]) -> (Vec<u64>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n.len()).collect();
    perm.sort_by_key(|&i| n[i]);
    let sorted = perm.iter().map(|&i| n[i]).collect();
    (sorted, perm)
}

/// All masks of dimension `dim` in ascending bit order that pass `filter`.
pub fn subsets<F>(dim: usize, filter: F) -> Result<impl Iterator<Item = SubsetMask>>
where
    F: Fn(SubsetMask) -> bool,
{
    check_dim(dim)?;
    let end = 1u64 << dim;
    Ok((0..end)
        .map(move |b| SubsetMask { bits: b as u32, dim })
        .filter(move |m| filter(*m)))
}

/// Parameters keyed by subset masks, exactly as read from or written to JSON.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SubsetParamMap {
    pub dim: usize,
    pub entries: BTreeMap<u32, f64>,
}

impl SubsetParamMap {
    pub fn new(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(SubsetParamMap { dim, entries: BTreeMap::new() })
    }

    pub fn insert(&mut self, mask: u32, value: f64) -> Result<()> {
        if (mask as u64) >= (1u64 << self.dim) {
            return Err(Error::IndexOutOfRange {
                what: format!("mask {mask} in dimension {}", self.dim),
            });
        }
        self.entries.insert(mask, value);
        Ok(())
    }

    pub fn get(&self, mask: u32) -> Option<f64> {
        self.entries.get(&mask).copied()
    }

    /// Sets every absent nonempty mask to 1, the neutral narrow value.
    pub fn fill_narrow_ones(&mut self) {
        for b in 1..(1u64 << self.dim) {
            self.entries.entry(b as u32).or_insert(1.0);
        }
    }

    /// Sets every absent mask, including the empty one, to 0.
    pub fn fill_wide_zeros(&mut self) {
        for b in 0..(1u64 << self.dim) {
            self.entries.entry(b as u32).or_insert(0.0);
        }
    }

    pub fn from_dense(dim: usize, values: &[f64], skip_empty: bool) -> Result<Self> {
        let mut map = SubsetParamMap::new(dim)?;
        let start = usize::from(skip_empty);
        for (b, &v) in values.iter().enumerate().skip(start) {
            map.insert(b as u32, v)?;
        }
        Ok(map)
    }
}
