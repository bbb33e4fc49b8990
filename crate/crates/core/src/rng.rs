//! Seeding.
//!
//! Every random draw comes from a ChaCha20 stream keyed by a 64-bit seed.
//! Child seeds are derived with a SplitMix64 finalizer, so a replication's
//! streams depend only on `(master_seed, replication_index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Recorded in reports so results can be regenerated.
pub const GENERATOR: &str = "ChaCha20Rng (rand_chacha 0.9) seeded via seed_from_u64; child seeds by SplitMix64";

/// Purposes for child streams. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Positions = 1,
    Treatment = 2,
    Noise = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `index` of a study keyed by `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn child_seed(parent: u64, stream: Stream) -> u64 {
    splitmix64(parent ^ splitmix64(stream as u64))
}

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
