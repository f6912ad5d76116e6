//! Seeded random streams.
//!
//! Every Monte-Carlo routine in the crate draws from xoshiro256++ seeded
//! through SplitMix64. Independent jobs derive their own stream from
//! `(master_seed, job_index)` so results never depend on scheduling.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Name recorded in output metadata.
pub const PRNG_NAME: &str =
    "xoshiro256++ (rand_xoshiro 0.7), seeded via splitmix64; stream = splitmix64(master ^ splitmix64(job))";

pub type Rng = Xoshiro256PlusPlus;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Seed of the stream belonging to job `job` under `master`.
pub fn stream_seed(master: u64, job: u64) -> u64 {
    splitmix64(master ^ splitmix64(job))
}

pub fn job_rng(master: u64, job: u64) -> Rng {
    rng_from_seed(stream_seed(master, job))
}
