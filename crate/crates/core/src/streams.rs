//! Deterministic random streams.
//!
//! Replication `r` under master seed `s` always draws from ChaCha8 keyed by `s`
//! on stream `r`, no matter which worker runs it. Purchase tie-breaks use a
//! separate generator keyed by (replication key, node, time) so the outcome of
//! a step does not depend on the order nodes are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for a tagged sub-computation.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    mix64(mix64(seed ^ mix64(tag)) ^ index)
}

pub fn replication_rng(master_seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replication);
    rng
}

/// Key for the tie-break streams of one replication.
pub fn replication_key(master_seed: u64, replication: u64) -> u64 {
    derive_seed(master_seed, 0x7469_6573, replication)
}

pub(crate) fn tie_rng(key: u64, node: usize, time: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(key ^ mix64(((node as u64) << 24) ^ time as u64)))
}
