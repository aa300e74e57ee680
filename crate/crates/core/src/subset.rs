//! Subsets of the input variables as bitmasks.
//!
//! Bit `i` of a mask is set iff variable `i + 1` belongs to the subset. Every
//! length-2ⁿ vector in this crate is indexed by such a mask.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on the number of analyzed variables (tables are Θ(2ⁿ)).
pub const MAX_VARIABLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetMask {
    bits: u32,
    n: u8,
}

impl SubsetMask {
    pub fn new(bits: u32, n: usize) -> Result<Self> {
        check_n(n)?;
        if (bits as u64) >= (1u64 << n) {
            return Err(Error::InvalidArgument(format!(
                "mask {bits:#b} does not fit in {n} variables"
            )));
        }
        Ok(SubsetMask { bits, n: n as u8 })
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(0, n)
    }

    pub fn full(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(SubsetMask {
            bits: full_bits(n) as u32,
            n: n as u8,
        })
    }

    /// Builds a mask from 1-based variable indices.
    pub fn from_variables(vars: &[usize], n: usize) -> Result<Self> {
        let mut bits = 0u32;
        for &v in vars {
            if v == 0 || v > n {
                return Err(Error::InvalidArgument(format!(
                    "variable {v} outside 1..={n}"
                )));
            }
            bits |= 1 << (v - 1);
        }
        Self::new(bits, n)
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn index(self) -> usize {
        self.bits as usize
    }

    pub fn n(self) -> usize {
        self.n as usize
    }

    pub fn order(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(self, var: usize) -> bool {
        var >= 1 && var <= self.n() && self.bits & (1 << (var - 1)) != 0
    }

    pub fn complement(self) -> Self {
        SubsetMask {
            bits: self.bits ^ full_bits(self.n()) as u32,
            n: self.n,
        }
    }

    /// 1-based indices of the member variables.
    pub fn variables(self) -> Vec<usize> {
        (0..self.n()).filter(|i| self.bits & (1 << i) != 0).map(|i| i + 1).collect()
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, v) in self.variables().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

pub(crate) fn full_bits(n: usize) -> usize {
    (1usize << n) - 1
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n > MAX_VARIABLES {
        Err(Error::TooManyVariables {
            n,
            limit: MAX_VARIABLES,
        })
    } else {
        Ok(())
    }
}

/// Number of variables `n` for a vector of length 2ⁿ.
pub(crate) fn log2_len(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "vector length {len} is not a power of two"
        )));
    }
    let n = len.trailing_zeros() as usize;
    check_n(n)?;
    Ok(n)
}
