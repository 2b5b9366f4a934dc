//! Counter-derived RNG substreams.
//!
//! Every stochastic routine takes a master seed plus a tag path (e.g.
//! `[path_index]` or `[path_index, step, STREAM_DRIFT]`) and derives an
//! independent ChaCha stream by hashing. Results are therefore identical
//! for any parallel schedule and any thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream tag for the Brownian increments of a simulated path.
pub const STREAM_NOISE: u64 = 1;
/// Stream tag for per-step Monte Carlo drift estimation.
pub const STREAM_DRIFT: u64 = 2;
/// Stream tag for initial-state sampling.
pub const STREAM_INIT: u64 = 3;
/// Stream tag for oracle/reference samplers.
pub const STREAM_ORACLE: u64 = 4;

/// Derive an independent substream from `(master, tags...)`.
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for t in tags {
        hasher.update(t.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
