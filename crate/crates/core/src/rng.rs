//! Random number streams.
//!
//! Every stochastic component draws from a [`SimRng`], which is xoshiro256**
//! seeded through SplitMix64 (`seed_from_u64`). Independent components get
//! independent streams via [`derive_seed`], so adding draws in one component
//! never shifts the output of another.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type SimRng = Xoshiro256StarStar;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// One SplitMix64 step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for the stream named `label` under the global seed:
/// `splitmix64(seed ^ fnv1a(label))`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a(label))
}
