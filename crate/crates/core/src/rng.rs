//! Deterministic random substreams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` obtained through
//! [`substream`]. The derivation is a pure function of
//! `(master_seed, lane, index)`:
//!
//! * the 256-bit ChaCha key is four consecutive SplitMix64 outputs started
//!   from `master_seed ^ lane.wrapping_mul(GOLDEN)`;
//! * the ChaCha stream id is `index`.
//!
//! Distinct `(key, stream)` pairs address disjoint ChaCha keystreams, so
//! replication `i` of a run never shares randomness with replication `j`.
//! Lanes separate unrelated consumers (the reuse chain versus the naive
//! baseline, for instance) that share a master seed and replication index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Lane of the reuse chain.
pub const LANE_CHAIN: u64 = 0;
/// Lane of the per-level fresh-draw baseline.
pub const LANE_NAIVE: u64 = 1;
/// Lane used by the density profile replications.
pub const LANE_DENSITY: u64 = 2;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(master_seed: u64, lane: u64, index: u64) -> StreamRng {
    let mut state = master_seed ^ lane.wrapping_mul(GOLDEN);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
