//! Seed derivation.
//!
//! A master seed fans out to streams by a counter: stream `j` gets
//! `mix(master + GOLDEN·(j+1))`. `mix` is a bijection on u64, so distinct
//! counters under one master never collide.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    mix(master.wrapping_add(GOLDEN.wrapping_mul(index.wrapping_add(1))))
}

/// Seed of a named stage, so stages do not share streams.
pub fn stage(master: u64, name: &str) -> u64 {
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    mix(master ^ tag)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derived_seeds_are_distinct() {
        let seen: HashSet<u64> = (0..10_000).map(|j| derive(42, j)).collect();
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn stages_differ() {
        assert_ne!(stage(1, "forward"), stage(1, "design"));
        assert_eq!(stage(1, "forward"), stage(1, "forward"));
    }
}
