//! Seed splitting shared by the bootstrap and the Monte Carlo engine.
//!
//! Job `j` under master seed `s` uses ChaCha8 keyed by `s` on stream `j`.
//! Streams are independent, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the `index`-th derived job: the first word of its stream.
pub fn derived_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, index).next_u64()
}
