//! Counter-based RNG substreams.
//!
//! Every stochastic operation draws from a dedicated substream keyed by
//! `(seed, phase, iter, block, particle)`. Keys are mixed into a 64-bit
//! state with SplitMix64 and used to seed a ChaCha8 generator, so results
//! are identical whether particles are updated serially or in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Initial particle draws.
pub const PHASE_INIT: u64 = 0x01;
/// Per-iteration block updates (subsample indices + Langevin noise).
pub const PHASE_UPDATE: u64 = 0x02;
/// Auxiliary draws for lower-bound evaluation (analytic-factor samples).
pub const PHASE_LOWER_BOUND: u64 = 0x03;
/// Minibatch index draws.
pub const PHASE_DATA: u64 = 0x04;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the substream key for `(seed, phase, iter, block, particle)`.
#[inline]
pub fn stream_key(seed: u64, phase: u64, iter: u64, block: u64, particle: u64) -> u64 {
    let mut k = splitmix64(seed ^ 0x243f_6a88_85a3_08d3);
    k = splitmix64(k ^ phase);
    k = splitmix64(k ^ iter);
    k = splitmix64(k ^ block);
    splitmix64(k ^ particle)
}

/// Generator for one substream.
#[inline]
pub fn substream(seed: u64, phase: u64, iter: u64, block: u64, particle: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, phase, iter, block, particle))
}

/// Context identifying one block's half-iteration; each particle derives
/// its own substream from it.
#[derive(Debug, Clone, Copy)]
pub struct StreamCtx {
    pub seed: u64,
    pub iter: u64,
    pub block: u64,
}

impl StreamCtx {
    pub fn new(seed: u64, iter: u64, block: u64) -> Self {
        StreamCtx { seed, iter, block }
    }

    pub fn particle_rng(&self, phase: u64, particle: usize) -> ChaCha8Rng {
        substream(self.seed, phase, self.iter, self.block, particle as u64)
    }
}
