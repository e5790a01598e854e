//! Seeded, splittable random streams.
//!
//! Every independent unit of work (a horizon, a cluster, a rollout) draws
//! from its own ChaCha stream so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs a (domain, major, minor) triple into one stream id.
pub fn stream_id(domain: u8, major: u32, minor: u32) -> u64 {
    ((domain as u64) << 56) | ((major as u64 & 0xFF_FFFF) << 32) | minor as u64
}
