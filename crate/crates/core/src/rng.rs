//! Counter-style random streams.
//!
//! Every random quantity in an experiment is drawn from a stream addressed by
//! `(master seed, tag, index)`. Two streams with different addresses never
//! share state, so replicas can run on any thread in any order and still
//! produce identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_pcg::Pcg64Mcg;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn stream tags into integers.
pub fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Stream for replica `index` of the experiment component named `tag`.
pub fn stream(master: u64, tag: &str, index: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    let mut state = master ^ tag_hash(tag).rotate_left(17);
    for chunk in seed.chunks_exact_mut(8) {
        state = mix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}

/// Derive a 64-bit seed for a sub-object (e.g. a tree) of a replica.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    mix64(mix64(master ^ tag_hash(tag)) ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Cheap generator for per-vertex draws keyed by a vertex key.
pub(crate) fn vertex_rng(key: u64) -> Pcg64Mcg {
    Pcg64Mcg::new(u128::from(mix64(key)) << 64 | u128::from(mix64(key ^ 0xa076_1d64_78bd_642f)) | 1)
}
