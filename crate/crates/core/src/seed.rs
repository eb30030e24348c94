//! Pinned seed derivation.
//!
//! Every stochastic stream in the crate is seeded from `derive_seed(master, path)`
//! so that results depend only on the master seed and the logical position of
//! the stream, never on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream used throughout the crate.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed together with a path of stream coordinates.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix(master), |acc, &p| mix(acc ^ mix(p.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// Build a generator for the stream identified by `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

/// Build a generator directly from an already-derived seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream tags used by the pipelines.
pub mod tags {
    pub const OBSERVATION: u64 = 1;
    pub const POOL: u64 = 2;
    pub const TRAINING: u64 = 3;
    pub const TEST: u64 = 4;
    pub const PSEUDO_OBS: u64 = 5;
    pub const SMC: u64 = 6;
    pub const SUBSAMPLE: u64 = 7;
    pub const PILOT: u64 = 8;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_pinned_and_path_sensitive() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_ne!(derive_seed(1, &[]), derive_seed(1, &[0]));
    }
}
