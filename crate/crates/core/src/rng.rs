//! Seed derivation for independent, schedule-free random streams.
//!
//! Every stochastic call site gets its own stream derived from the master
//! seed and a tuple of integers naming the call site (phase, generation,
//! individual index, ...). Results therefore never depend on which worker
//! thread picks a job up or in which order jobs complete.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parts` into `master`, order-sensitively.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_stream(master: u64, parts: &[u64]) -> Rng {
    stream(derive_seed(master, parts))
}

/// Call-site tags so derived streams from different phases never collide.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const VARIATION: u64 = 3;
    pub const POOL: u64 = 4;
    pub const AUDIT: u64 = 5;
    pub const DATA: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const AUGMENT: u64 = 8;
    pub const BASELINE: u64 = 9;
    pub const PROXY: u64 = 10;
    pub const CHAMPION: u64 = 11;
}
