//! Cache geometry and address arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Full (byte) memory address.
///
/// Only the bits above `offset_bits` take part in set mapping; the line
/// number is what every scheme stores and compares.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u64);

impl Address {
    /// Address of the first byte of line `line`.
    pub fn from_line(line: u64, geo: &CacheGeometry) -> Self {
        Address(line << geo.offset_bits)
    }

    /// Line number: the address with the block-offset bits shifted out.
    #[inline]
    pub fn line(self, geo: &CacheGeometry) -> u64 {
        self.0 >> geo.offset_bits
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Shape of a cache bank: `n_lines = n_sets * assoc`, optionally split into
/// `n_skews` equal partitions of the set array.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub n_lines: usize,
    pub n_sets: usize,
    pub assoc: usize,
    pub n_skews: usize,
    pub offset_bits: u32,
    pub addr_bits: u32,
}

impl CacheGeometry {
    /// Non-skewed geometry with 64-byte lines and 64-bit addresses.
    pub fn new(n_sets: usize, assoc: usize) -> Result<Self, ConfigError> {
        Self::with_skews(n_sets, assoc, 1)
    }

    pub fn with_skews(n_sets: usize, assoc: usize, n_skews: usize) -> Result<Self, ConfigError> {
        let geo = CacheGeometry {
            n_lines: n_sets * assoc,
            n_sets,
            assoc,
            n_skews,
            offset_bits: 6,
            addr_bits: 64,
        };
        geo.validate()?;
        Ok(geo)
    }

    /// The 2 MB, 16-way bank used throughout: 2048 sets, 32768 lines.
    pub fn llc_bank() -> Self {
        Self::new(2048, 16).expect("valid built-in geometry")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pow2 = |name: &'static str, v: usize| {
            if v == 0 || !v.is_power_of_two() {
                Err(ConfigError::invalid(name, format!("{v} is not a power of two")))
            } else {
                Ok(())
            }
        };
        pow2("n_sets", self.n_sets)?;
        pow2("assoc", self.assoc)?;
        pow2("n_skews", self.n_skews)?;
        if self.n_lines != self.n_sets * self.assoc {
            return Err(ConfigError::invalid(
                "n_lines",
                format!("{} != n_sets * assoc = {}", self.n_lines, self.n_sets * self.assoc),
            ));
        }
        if self.n_skews > self.n_sets {
            return Err(ConfigError::invalid(
                "n_skews",
                format!("{} skews cannot partition {} sets", self.n_skews, self.n_sets),
            ));
        }
        if self.addr_bits > 64 || self.offset_bits >= self.addr_bits {
            return Err(ConfigError::invalid(
                "offset_bits",
                format!(
                    "offset_bits {} must be below addr_bits {}",
                    self.offset_bits, self.addr_bits
                ),
            ));
        }
        if self.set_bits() > self.domain_bits() {
            return Err(ConfigError::invalid("n_sets", "more set bits than address bits"));
        }
        Ok(())
    }

    #[inline]
    pub fn set_bits(&self) -> u32 {
        self.n_sets.trailing_zeros()
    }

    /// Width of the line-number space (address bits above the offset).
    #[inline]
    pub fn domain_bits(&self) -> u32 {
        self.addr_bits - self.offset_bits
    }

    #[inline]
    pub fn sets_per_skew(&self) -> usize {
        self.n_sets / self.n_skews
    }

    /// Mask selecting a valid line number.
    #[inline]
    pub fn line_mask(&self) -> u64 {
        mask(self.domain_bits())
    }

    /// Split an address into `(tag, set_index, offset)` using the plain set bits.
    pub fn decompose(&self, addr: Address) -> (u64, usize, u64) {
        let offset = addr.0 & mask(self.offset_bits);
        let line = addr.0 >> self.offset_bits;
        let set = (line & mask(self.set_bits())) as usize;
        let tag = line.checked_shr(self.set_bits()).unwrap_or(0);
        (tag, set, offset)
    }

    /// Inverse of [`decompose`](Self::decompose).
    pub fn recompose(&self, tag: u64, set_index: usize, offset: u64) -> Address {
        let line = (tag.checked_shl(self.set_bits()).unwrap_or(0)) | set_index as u64;
        Address((line << self.offset_bits) | offset)
    }
}

#[inline]
pub(crate) fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_index_comes_from_bits_above_offset() {
        let geo = CacheGeometry::new(2048, 16).unwrap();
        let (_, set, off) = geo.decompose(Address(0x40));
        assert_eq!(set, 1);
        assert_eq!(off, 0);
        // Bit 16 of the address is set bit 10, so 0x1_0040 lands in set 1025.
        let (tag, set, _) = geo.decompose(Address(0x0000_0000_0001_0040));
        assert_eq!((tag, set), (0, 1025));
        assert_eq!(geo.decompose(Address(0x2_0040)), (1, 1, 0));
        assert_eq!(geo.decompose(Address(0)), (0, 0, 0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(CacheGeometry::new(3, 4).is_err());
        assert!(CacheGeometry::new(4, 0).is_err());
        assert!(CacheGeometry::with_skews(4, 4, 8).is_err());
        let mut geo = CacheGeometry::new(4, 4).unwrap();
        geo.n_lines = 15;
        assert!(geo.validate().is_err());
    }

    #[test]
    fn llc_bank_matches_symbols() {
        let geo = CacheGeometry::llc_bank();
        assert_eq!(geo.n_lines, 1 << 15);
        assert_eq!(geo.set_bits(), 11);
        assert_eq!(geo.domain_bits(), 58);
    }

    proptest! {
        #[test]
        fn decompose_round_trips(a in any::<u64>(), sets_log in 0u32..16) {
            let geo = CacheGeometry::new(1 << sets_log, 8).unwrap();
            let (tag, set, off) = geo.decompose(Address(a));
            prop_assert!(set < geo.n_sets);
            prop_assert_eq!(geo.recompose(tag, set, off), Address(a));
        }
    }
}
