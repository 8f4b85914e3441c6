//! Deterministic seed derivation for parallel Monte Carlo.
//!
//! Every stochastic routine takes a single master seed and derives one
//! independent stream per work item (sample index, walk index, ...) with
//! [`derive_seed`].  Workers never share a generator, so results do not
//! depend on thread count or scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.  Full-period bijective mixer; the standard
/// choice for expanding a seed into decorrelated substreams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of substream `index` from `master`.
///
/// Collision-free in `index` for a fixed master (the map is a bijection
/// composed with a fixed offset) and avalanching in both arguments.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0xa076_1d64_78bd_642f)))
}

/// The generator used throughout: small-state counter-mode stream cipher,
/// reproducible across platforms.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
