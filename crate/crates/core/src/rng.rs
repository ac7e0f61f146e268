//! Seeded random streams.
//!
//! Every consumer of randomness derives its generator from a `(seed, stream)`
//! pair so that independent pieces of a pipeline never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream identifiers.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const PERTURB: u64 = 3;
    pub const INIT: u64 = 4;
    pub const MASK: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const REPARAM: u64 = 7;
    pub const SAMPLE: u64 = 8;
    pub const EVAL: u64 = 9;
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes an index into a seed (splitmix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
