//! Stable seed derivation so every random stream is a pure function of
//! `(base seed, purpose, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the bytes of a string.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, parts))
}

// Stream tags keep unrelated consumers of one base seed apart.
pub const TAG_VIDEO: u64 = 0x7669_6465_6f00;
pub const TAG_CLIPS: u64 = 0x636c_6970_7300;
pub const TAG_DETECT: u64 = 0x6465_7465_6374;
pub const TAG_INIT: u64 = 0x696e_6974_0000;
pub const TAG_SHUFFLE: u64 = 0x7368_7566_666c;
