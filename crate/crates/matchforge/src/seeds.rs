//! Splittable seed derivation.
//!
//! Every stochastic entry point takes one master `u64` seed; independent
//! sub-streams (per run, per method, per bootstrap replication) are derived
//! by folding context tags through splitmix64. Streams are pre-assigned from
//! indices, never from scheduling order, so results are identical for any
//! worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a sub-seed from a master seed and a context path.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x6a09_e667_f3bc_c909);
    for &tag in tags {
        state = splitmix64(state ^ splitmix64(tag.wrapping_add(0x1f83_d9ab_fb41_bd6b)));
    }
    state
}

/// A ChaCha8 stream for the given context path.
pub fn rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
