//! Sub-seed derivation. Every random stream in the pipeline is seeded from
//! the master seed mixed with a stage tag and a counter, so adding a stream
//! never shifts the values of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for stream `(stage, index)` under `master`.
pub fn derive(master: u64, stage: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ stage) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_streams() {
        let a = derive(7, 1, 0);
        assert_ne!(a, derive(7, 1, 1));
        assert_ne!(a, derive(7, 2, 0));
        assert_ne!(a, derive(8, 1, 0));
        assert_eq!(a, derive(7, 1, 0));
    }
}
