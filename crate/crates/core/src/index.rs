//! Consecutive Fourier index sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of consecutive integer indices `k_min..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet {
    k_min: i64,
    k_max: i64,
}

impl IndexSet {
    pub fn new(k_min: i64, k_max: i64) -> Result<Self> {
        if k_max < k_min {
            return Err(Error::InvalidIndexSet(format!(
                "k_max ({k_max}) < k_min ({k_min})"
            )));
        }
        Ok(Self { k_min, k_max })
    }

    /// `{-p, ..., p}`, cardinality `2p + 1`.
    pub fn symmetric(p: u32) -> Self {
        let p = i64::from(p);
        Self { k_min: -p, k_max: p }
    }

    /// Centered set of cardinality `m`: `{-floor(m/2), ...}`. Symmetric for odd `m`.
    pub fn centered(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidIndexSet("cardinality must be >= 1".into()));
        }
        let k_min = -((m / 2) as i64);
        Ok(Self {
            k_min,
            k_max: k_min + m as i64 - 1,
        })
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_max
    }

    pub fn len(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: i64) -> bool {
        k >= self.k_min && k <= self.k_max
    }

    /// True when `k in K` implies `-k in K`.
    pub fn is_symmetric(&self) -> bool {
        self.k_min == -self.k_max
    }

    /// Position of `k` inside the set.
    pub fn position(&self, k: i64) -> Option<usize> {
        self.contains(k).then(|| (k - self.k_min) as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> + Clone {
        self.k_min..=self.k_max
    }
}
