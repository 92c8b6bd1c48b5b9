//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by the master seed plus a short
//! path of counters (domain tag, point index, trial index, ...), so any
//! stream can be regenerated on its own and adding trials never shifts the
//! streams of earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep the channel, symbol and noise streams apart.
pub mod domain {
    pub const CHANNEL: u64 = 0x4348_414e;
    pub const SYMBOLS: u64 = 0x5359_4d42;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SEP: u64 = 0x5345_5050;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `path` into `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// ChaCha8 generator for `(seed, stream)`; streams of one seed never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
