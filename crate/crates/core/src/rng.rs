//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers. Each consumer of randomness owns one so that adding
/// draws in one place never shifts another.
pub(crate) mod stream {
    pub const CATALOG: u64 = 1;
    pub const QUOTAS: u64 = 2;
    pub const IMAGE: u64 = 3;
    pub const APPEARANCE: u64 = 4;
    pub const PROTOTYPES: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SCHEDULE: u64 = 7;
    pub const INIT: u64 = 8;
    pub const PERMUTE: u64 = 9;
    pub const CLASS_SPLIT: u64 = 10;
    pub const TEST_QUOTAS: u64 = 11;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub(crate) fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
