//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(seed, domain, t)` and a lane (usually a node index). Streams are
//! independent of evaluation order, so rows can be sampled on any number of
//! threads and the result is bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a random stream; keeps unrelated draws from sharing keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Membership = 1,
    Edges = 2,
    MinoritySelect = 3,
    Relabel = 4,
    Noise = 5,
    KMeans = 6,
    Experiment = 7,
    Schedule = 8,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes several words into one 64-bit key.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Independent stream for `(seed, domain, t, lane)`.
pub fn stream(seed: u64, domain: Domain, t: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, domain as u64, t]));
    rng.set_stream(lane);
    rng
}

/// Derives a child seed, e.g. one per Monte Carlo run.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    mix(&[seed, domain as u64, index, 0xA5A5])
}
