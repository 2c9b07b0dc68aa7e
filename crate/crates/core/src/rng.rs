//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by an
//! experiment seed and a purpose tag; the replicate index selects the
//! ChaCha stream. Replicate `i` therefore sees the same numbers no matter
//! which worker thread runs it or how many replicates exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the tag bytes.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3))
}

/// Derives a 64-bit subseed; used to nest purposes (e.g. per-α streams).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut s = seed ^ tag_hash(tag).rotate_left(17);
    splitmix64(&mut s)
}

/// The stream for one replicate of one purpose.
pub fn stream(seed: u64, tag: &str, replicate: u64) -> ChaCha8Rng {
    let mut s = seed ^ tag_hash(tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}

/// Runs `f` for replicates `0..n` in parallel; output order is replicate order.
pub fn par_replicates<T, F>(seed: u64, tag: &str, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let mut rng = stream(seed, tag, i as u64);
            f(&mut rng, i)
        })
        .collect()
}

/// Fallible variant of [`par_replicates`]; the first error by replicate order wins.
pub fn try_par_replicates<T, E, F>(seed: u64, tag: &str, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> Result<T, E> + Sync,
{
    par_replicates(seed, tag, n, f).into_iter().collect()
}
