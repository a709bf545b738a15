//! Labelled random streams.
//!
//! Every consumer of randomness (environment, each agent, exploration noise,
//! evaluation) draws from its own ChaCha12 stream. A stream is identified by a
//! 64-bit run seed and a text label; the label is hashed with FNV-1a (64 bit)
//! into the ChaCha stream id, so streams never overlap and adding a consumer
//! does not perturb the others.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Name recorded in run manifests; determinism claims are scoped to it.
pub const PRNG_ALGORITHM: &str = "ChaCha12 (rand_chacha 0.9); seed_from_u64(seed), stream = FNV-1a-64(label)";

pub type StreamRng = ChaCha12Rng;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn stream(seed: u64, label: &str) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(label.as_bytes()));
    rng
}
