//! Seeded random source used throughout the crate.
//!
//! Every draw comes from ChaCha20 (`rand_chacha`), whose output stream is
//! fixed across platforms for a given seed. Normal variates use the ziggurat
//! sampler of `rand_distr::StandardNormal`. Independent consumers of the same
//! integer seed are separated by ChaCha stream ids.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha20Rng;

/// Stream used for knockoff noise draws.
pub const STREAM_KNOCKOFF: u64 = 0;
/// Stream used by the synthetic design generator.
pub const STREAM_DESIGN: u64 = 1;

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}
