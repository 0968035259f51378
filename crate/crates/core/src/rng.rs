//! Seeded random streams.
//!
//! Every random quantity in the crate (operator payloads, measurement noise,
//! divergence probes, training order) is drawn from a ChaCha8 generator keyed
//! by a 64-bit seed and a stream id, so reruns are bit-identical.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

/// Stream ids used across the crate. Distinct streams under the same seed are
/// statistically independent.
pub mod stream {
    pub const OPERATOR: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const PROBE: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const CURATE: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PHANTOM: u64 = 7;
}

pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a seed with an index so that per-item generators do not overlap.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = standard_normal_vec(&mut seeded(9, stream::NOISE), 8);
        let b = standard_normal_vec(&mut seeded(9, stream::NOISE), 8);
        let c = standard_normal_vec(&mut seeded(9, stream::PROBE), 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
    }
}
