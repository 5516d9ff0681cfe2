//! Keyed pseudorandom permutation over line numbers.
//!
//! Address "encryption" is a balanced Feistel network over `domain_bits`
//! bits. Odd widths run the network on one extra bit and cycle-walk back
//! into range, which keeps the map a bijection on exactly `2^domain_bits`
//! values.

use std::fmt;

use crate::geometry::mask;
use crate::rng::{mix64, RngStream};

const ROUNDS: usize = 8;

/// 128 bits of key material plus the width of the permuted domain.
#[derive(Copy, Clone, PartialEq, Eq, Hash)]
pub struct PermutationKey {
    pub material: u128,
    pub domain_bits: u32,
}

impl fmt::Debug for PermutationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PermutationKey({:032x}/{})", self.material, self.domain_bits)
    }
}

impl PermutationKey {
    pub fn new(material: u128, domain_bits: u32) -> Self {
        assert!((1..=64).contains(&domain_bits), "domain_bits must be in 1..=64");
        PermutationKey { material, domain_bits }
    }

    pub fn random(rng: &mut RngStream, domain_bits: u32) -> Self {
        let hi = rng.next_u64() as u128;
        let lo = rng.next_u64() as u128;
        Self::new((hi << 64) | lo, domain_bits)
    }
}

/// A ready-to-use permutation: either a keyed Feistel network or the
/// identity map (a test hook that degenerates SE to SA).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    key: Option<PermutationKey>,
    round_keys: [u64; ROUNDS],
    half_bits: u32,
    half_mask: u64,
    domain_bits: u32,
}

impl Permutation {
    pub fn new(key: PermutationKey) -> Self {
        let width = key.domain_bits + (key.domain_bits & 1);
        let half_bits = width / 2;
        let lo = key.material as u64;
        let hi = (key.material >> 64) as u64;
        let mut round_keys = [0u64; ROUNDS];
        let mut state = lo ^ mix64(hi);
        for (r, rk) in round_keys.iter_mut().enumerate() {
            state = mix64(state.wrapping_add(0x9e37_79b9_7f4a_7c15 ^ (r as u64)));
            *rk = state ^ if r % 2 == 0 { hi } else { lo };
        }
        Permutation {
            key: Some(key),
            round_keys,
            half_bits,
            half_mask: mask(half_bits),
            domain_bits: key.domain_bits,
        }
    }

    pub fn identity(domain_bits: u32) -> Self {
        Permutation {
            key: None,
            round_keys: [0; ROUNDS],
            half_bits: 0,
            half_mask: 0,
            domain_bits,
        }
    }

    pub fn random(rng: &mut RngStream, domain_bits: u32) -> Self {
        Self::new(PermutationKey::random(rng, domain_bits))
    }

    pub fn key(&self) -> Option<&PermutationKey> {
        self.key.as_ref()
    }

    pub fn is_identity(&self) -> bool {
        self.key.is_none()
    }

    pub fn domain_bits(&self) -> u32 {
        self.domain_bits
    }

    #[inline]
    fn round(&self, r: usize, half: u64) -> u64 {
        let k = self.round_keys[r];
        let x = mix64(half ^ k);
        mix64(x.wrapping_add(k.rotate_left(17))) & self.half_mask
    }

    #[inline]
    fn forward(&self, x: u64) -> u64 {
        let mut left = x >> self.half_bits;
        let mut right = x & self.half_mask;
        for r in 0..ROUNDS {
            let next = left ^ self.round(r, right);
            left = right;
            right = next;
        }
        (left << self.half_bits) | right
    }

    #[inline]
    fn backward(&self, y: u64) -> u64 {
        let mut left = y >> self.half_bits;
        let mut right = y & self.half_mask;
        for r in (0..ROUNDS).rev() {
            let prev = right ^ self.round(r, left);
            right = left;
            left = prev;
        }
        (left << self.half_bits) | right
    }

    /// Encrypt a line number. Bits above `domain_bits` are ignored.
    #[inline]
    pub fn encrypt(&self, line: u64) -> u64 {
        let x = line & mask(self.domain_bits);
        if self.key.is_none() {
            return x;
        }
        let mut y = self.forward(x);
        while y.checked_shr(self.domain_bits).unwrap_or(0) != 0 {
            y = self.forward(y);
        }
        y
    }

    #[inline]
    pub fn invert(&self, enc: u64) -> u64 {
        debug_assert!(enc.checked_shr(self.domain_bits).unwrap_or(0) == 0);
        if self.key.is_none() {
            return enc;
        }
        let mut x = self.backward(enc);
        while x.checked_shr(self.domain_bits).unwrap_or(0) != 0 {
            x = self.backward(x);
        }
        x
    }
}

/// Low `log2(table_size)` bits of an encrypted value.
#[inline]
pub fn derive_index(enc: u64, table_size: usize) -> usize {
    debug_assert!(table_size.is_power_of_two());
    (enc & (table_size as u64 - 1)) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_index_takes_low_bits() {
        assert_eq!(derive_index(0b1011, 4), 3);
        assert_eq!(derive_index(0, 1 << 15), 0);
        assert_eq!(derive_index(u64::MAX, 1), 0);
    }

    #[test]
    fn invert_undoes_encrypt() {
        let mut rng = RngStream::new(11);
        let p = Permutation::random(&mut rng, 58);
        assert_eq!(p.invert(p.encrypt(0)), 0);
        for _ in 0..100_000 {
            let x = rng.next_u64() & mask(58);
            let y = p.encrypt(x);
            assert!(y < 1 << 58);
            assert_eq!(p.invert(y), x);
        }
    }

    #[test]
    fn odd_domain_is_a_bijection() {
        let mut rng = RngStream::new(5);
        for bits in [1u32, 3, 7, 11] {
            let p = Permutation::random(&mut rng, bits);
            let mut seen = vec![false; 1 << bits];
            for x in 0..(1u64 << bits) {
                let y = p.encrypt(x) as usize;
                assert!(!seen[y]);
                seen[y] = true;
                assert_eq!(p.invert(y as u64), x);
            }
        }
    }

    #[test]
    fn identity_hook_is_identity() {
        let p = Permutation::identity(58);
        assert_eq!(p.encrypt(0x1234), 0x1234);
        assert_eq!(p.invert(0x1234), 0x1234);
    }

    #[test]
    fn keys_compare_by_material() {
        assert_eq!(PermutationKey::new(7, 58), PermutationKey::new(7, 58));
        assert_ne!(PermutationKey::new(7, 58), PermutationKey::new(8, 58));
    }
}
