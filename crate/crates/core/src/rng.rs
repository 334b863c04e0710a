//! Deterministic RNG fan-out.
//!
//! All randomness in the library derives from a single `u64` seed split into
//! named sub-streams ("init", "data", "augment", "eval", ...) so each
//! component is reproducible in isolation. Streams may be further keyed by
//! integer parts such as (epoch, sample index), which makes every draw a pure
//! function of (seed, name, parts) with no sequential state to persist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-stream seed without constructing the generator.
pub fn derive(seed: u64, name: &str, parts: &[u64]) -> u64 {
    let mut s = splitmix(seed ^ fnv1a(name.as_bytes()));
    for &p in parts {
        s = splitmix(s ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    s
}

/// A named deterministic sub-stream of the master seed.
pub fn stream(seed: u64, name: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, name, parts))
}

/// Stable 64-bit hash of a string, used for seed-free keying (e.g. the
/// validation split by video id).
pub fn hash_str(s: &str) -> u64 {
    fnv1a(s.as_bytes())
}
