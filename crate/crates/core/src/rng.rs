//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator keyed
//! by a 64-bit master seed and a 64-bit stream index. ChaCha supports 2^64
//! independent streams per key, so a (row, chain, replicate, purpose) tuple can
//! be folded into a stream index and each unit of parallel work gets its own
//! generator. Results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` under `master_seed`.
pub fn stream(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Generator for a stream identified by a tuple of indices.
pub fn derived(master_seed: u64, path: &[u64]) -> StreamRng {
    stream(master_seed, stream_index(path))
}

/// Folds an index path into one stream index with the splitmix64 finalizer.
pub fn stream_index(path: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
