//! Seed derivation. Every consumer draws from its own labelled stream so that
//! adding a consumer never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// 64-bit seed for the stream named `label` under the root `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(label)))
}

pub fn stream(seed: u64, label: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, label))
}

/// Stream for item `index` of a labelled family (e.g. one per frame).
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(splitmix64(derive_seed(seed, label) ^ splitmix64(index)))
}
