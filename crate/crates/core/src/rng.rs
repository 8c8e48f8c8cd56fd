//! Named, independently reproducible random streams.
//!
//! A single user-facing seed drives every random draw. Each consumer
//! (sampler, generator, benchmark cell) gets its own ChaCha stream selected
//! by hashing a name, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// RNG for the stream `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// RNG for one benchmark cell, keyed by case and method position.
pub fn cell_stream(seed: u64, case_index: usize, method_index: usize) -> StreamRng {
    stream(seed, &format!("bench/case{case_index}/method{method_index}"))
}
