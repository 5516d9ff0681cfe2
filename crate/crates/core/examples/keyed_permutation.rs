//! Keyed small-domain permutation: encrypt, invert, and check that every
//! key is a bijection on its domain.

use std::collections::HashSet;

use randcache::permutation::{derive_index, Permutation};
use randcache::RngStream;

fn main() {
    let bits = 16;
    let mut rng = RngStream::new(2024);
    for k in 0..4 {
        let p = Permutation::random(&mut rng, bits);
        let images: HashSet<u64> = (0..1u64 << bits).map(|x| p.encrypt(x)).collect();
        let line = 0x1234;
        let enc = p.encrypt(line);
        println!(
            "key {k}: {:#06x} -> {:#06x} -> {:#06x}, {} distinct images of {}, table index {}",
            line,
            enc,
            p.invert(enc),
            images.len(),
            1u64 << bits,
            derive_index(enc, 2048)
        );
    }
}
