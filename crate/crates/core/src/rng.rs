//! Seeded random sub-streams.
//!
//! Every random decision in the crate draws from a ChaCha stream derived from
//! the single run seed plus a label, so one knob controls reproducibility and
//! independent stages cannot perturb each other's draws.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// FNV-1a over the label bytes; stable across platforms and versions.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A deterministic stream for `(seed, label)`.
pub fn substream(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ label_hash(label).rotate_left(17))
}

/// A deterministic stream for `(seed, label, index)`, for per-item streams
/// such as restarts or trials.
pub fn substream_indexed(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mixed = label_hash(label)
        .rotate_left(17)
        .wrapping_add(index.wrapping_mul(0x9e3779b97f4a7c15));
    ChaCha8Rng::seed_from_u64(seed ^ mixed)
}
